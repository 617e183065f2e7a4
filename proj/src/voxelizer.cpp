#include "deepnose/voxelizer.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "deepnose/common.hpp"

namespace deepnose {

Molecule center_molecule(const Molecule& mol) {
  if (mol.atoms.empty()) raise(ErrorKind::EmptyMolecule, "cannot center a molecule with no atoms");
  Vec3 centroid{0, 0, 0};
  for (const Atom& a : mol.atoms) centroid = centroid + a.position;
  double inv = 1.0 / static_cast<double>(mol.atoms.size());
  centroid = inv * centroid;
  Molecule out = mol;
  for (Atom& a : out.atoms) a.position = a.position - centroid;
  return out;
}

std::uint32_t voxelize_orientation(const Molecule& mol, const Mat3& rotation, double box, double step,
                                   float* out, std::array<std::uint32_t, kElementChannels>& dropped) {
  const long side = std::lround(box / step);
  const long half = side / 2;
  const std::size_t l = static_cast<std::size_t>(side);
  std::memset(out, 0, sizeof(float) * kElementChannels * l * l * l);
  dropped.fill(0);

  std::uint32_t other = 0;
  for (const Atom& a : mol.atoms) {
    if (a.element == Element::Other) {
      ++other;
      continue;
    }
    Vec3 q = rotation * a.position;
    long ix = std::lround(q[0] / step);  // lround: halves away from zero
    long iy = std::lround(q[1] / step);
    long iz = std::lround(q[2] / step);
    ix += half;
    iy += half;
    iz += half;
    std::size_t e = static_cast<std::size_t>(a.element);
    if (ix < 0 || ix >= side || iy < 0 || iy >= side || iz < 0 || iz >= side) {
      ++dropped[e];
      continue;
    }
    out[((e * l + static_cast<std::size_t>(ix)) * l + static_cast<std::size_t>(iy)) * l +
        static_cast<std::size_t>(iz)] += 1.0f;
  }
  return other;
}

VoxelTensor voxelize(const Molecule& mol, const RotationGrid& grid, double box, double step) {
  if (step <= 0.0 || box <= 0.0) raise(ErrorKind::GridMismatch, "box and step must be positive");
  double ratio = box / step;
  if (std::abs(ratio - std::round(ratio)) > 1e-9)
    raise(ErrorKind::GridMismatch, "box/step must be integral, got " + format_double(ratio));

  VoxelTensor vox;
  vox.n_orient = grid.size();
  vox.side = static_cast<std::size_t>(std::lround(ratio));
  vox.data.assign(vox.n_orient * vox.slab_size(), 0.0f);
  vox.dropped_atoms.resize(vox.n_orient);

  for (const Atom& a : mol.atoms)
    if (a.element == Element::Other) ++vox.other_atoms;
  parallel_for(vox.n_orient, [&](std::size_t o) {
    voxelize_orientation(mol, grid.rotations[o], box, step, vox.slab(o), vox.dropped_atoms[o]);
  });
  return vox;
}

std::string voxel_to_bytes(const VoxelTensor& vox, std::uint32_t cid) {
  std::ostringstream out;
  out << "DNVOX v1 " << cid << ' ' << vox.n_orient << ' ' << vox.side << '\n';
  static_assert(sizeof(float) == 4);
  // this code only targets little-endian hosts; the format is pinned LE
  out.write(reinterpret_cast<const char*>(vox.data.data()),
            static_cast<std::streamsize>(vox.data.size() * sizeof(float)));
  return out.str();
}

VoxelTensor voxel_from_bytes(const std::string& bytes, std::uint32_t* cid_out) {
  std::size_t header_end = bytes.find('\n');
  if (header_end == std::string::npos) raise(ErrorKind::BadMagic, "missing DNVOX header");
  std::istringstream header(bytes.substr(0, header_end));
  std::string magic, version;
  std::uint32_t cid = 0;
  VoxelTensor vox;
  if (!(header >> magic >> version) || magic != "DNVOX") raise(ErrorKind::BadMagic, "not a DNVOX blob");
  if (version != "v1") raise(ErrorKind::VersionMismatch, "unsupported DNVOX version " + version);
  if (!(header >> cid >> vox.n_orient >> vox.side)) raise(ErrorKind::MalformedRecord, "bad DNVOX header");
  if (cid_out) *cid_out = cid;

  std::size_t payload = vox.n_orient * vox.slab_size() * sizeof(float);
  if (bytes.size() - header_end - 1 != payload)
    raise(ErrorKind::ShapeMismatch, "DNVOX payload is " + std::to_string(bytes.size() - header_end - 1) +
                                        " bytes, expected " + std::to_string(payload));
  vox.data.resize(vox.n_orient * vox.slab_size());
  std::memcpy(vox.data.data(), bytes.data() + header_end + 1, payload);
  vox.dropped_atoms.assign(vox.n_orient, {});
  return vox;
}

}  // namespace deepnose
