#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace deepnose {

struct FetchOptions {
  std::string cache_dir = "cache";
  // {cid} is substituted; the default asks PUG-REST for the 3D conformer record
  std::string endpoint =
      "https://pubchem.ncbi.nlm.nih.gov/rest/pug/compound/cid/{cid}/record/SDF?record_type=3d";
  bool network_enabled = false;
  int timeout_seconds = 30;
};

struct FetchFailure {
  std::uint32_t cid = 0;
  std::string reason;
};

struct FetchReport {
  std::size_t cache_hits = 0;
  std::size_t downloaded = 0;
  std::vector<FetchFailure> failures;
};

// Returns the SDF text for one cid. Cache hits (<cache_dir>/<cid>.sdf) bypass
// the network entirely; downloads are written via temp-file-then-rename.
// Throws Error(HttpFailure) on non-200 responses, Error(NoRecord) on empty
// bodies, Error(InvalidConfig) for cid 0 or disabled network on a cache miss.
std::string fetch_pubchem_sdf(std::uint32_t cid, const FetchOptions& options);

// Batch driver: failures are collected per cid and never abort the rest.
FetchReport fetch_pubchem_batch(const std::vector<std::uint32_t>& cids, const FetchOptions& options);

std::string cache_path_for(std::uint32_t cid, const FetchOptions& options);

}  // namespace deepnose
