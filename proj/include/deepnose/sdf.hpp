#pragma once

#include <string>
#include <vector>

#include "deepnose/molecule.hpp"

namespace deepnose {

// Parses one SDF/MOL V2000 record. Atoms come back in file order; element
// symbols are matched case-insensitively and unknown symbols map to
// Element::Other. The cid is taken from the name line when it parses as a
// positive integer, else 0. V3000 records are rejected.
//
// Throws Error(MalformedRecord) carrying the 1-based offending line number.
Molecule parse_sdf(const std::string& text);

// Splits a multi-record .sdf file on "$$$$" separators and parses each
// record. Blank-only trailing chunks are ignored.
std::vector<Molecule> parse_sdf_file(const std::string& text);

}  // namespace deepnose
