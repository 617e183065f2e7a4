#include "deepnose/model.hpp"

#include <cmath>
#include <cstring>
#include <map>

namespace deepnose {

void DeepNoseConfig::validate() const {
  if (conv_channels.empty()) raise(ErrorKind::InvalidConfig, "config: conv_channels must not be empty");
  if (conv_channels.size() % 2 != 0)
    raise(ErrorKind::InvalidConfig, "config: conv_channels must pair up, got " +
                                        std::to_string(conv_channels.size()) + " layers");
  if (in_channels == 0 || hidden == 0 || outputs == 0)
    raise(ErrorKind::InvalidConfig, "config: channel, hidden and output sizes must be positive");
  if (dropout < 0 || dropout >= 1) raise(ErrorKind::InvalidConfig, "config: dropout must be in [0, 1)");
  // Three max pools halve the side; the final average pool needs exactly 2.
  std::size_t s = side;
  const std::size_t n_pools = conv_channels.size() / 2 - 1;
  for (std::size_t i = 0; i < n_pools; ++i) {
    if (s < 2)
      raise(ErrorKind::InvalidConfig, "config: side " + std::to_string(side) + " collapses before pool " +
                                          std::to_string(i + 1));
    s /= 2;
  }
  if (s != 2)
    raise(ErrorKind::InvalidConfig, "config: side " + std::to_string(side) + " reduces to " +
                                        std::to_string(s) + " before the average pool, expected 2");
}

namespace {

constexpr char kMagic[6] = {'D', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i64(std::string& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) raise(ErrorKind::MalformedRecord, "checkpoint: truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

void put_tensor(std::string& out, const std::string& name, const Tensor<float>& t) {
  put_string(out, name);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape) put_u64(out, d);
  for (float v : t.v) put_f32(out, v);
}

// All tensors in checkpoint order, paired with their names.
std::vector<std::pair<std::string, Tensor<float>*>> tensor_list(DeepNoseModel<float>& m) {
  std::vector<std::pair<std::string, Tensor<float>*>> out;
  auto& cw = m.conv_weights();
  auto& cb = m.conv_biases();
  auto& bn = m.batch_norms();
  for (std::size_t i = 0; i < cw.size(); ++i) {
    const std::string p = "conv" + std::to_string(i);
    out.emplace_back(p + ".weight", &cw[i]->value);
    out.emplace_back(p + ".bias", &cb[i]->value);
    const std::string q = "bn" + std::to_string(i);
    out.emplace_back(q + ".gamma", &bn[i].gamma->value);
    out.emplace_back(q + ".beta", &bn[i].beta->value);
    out.emplace_back(q + ".running_mean", &bn[i].running_mean);
    out.emplace_back(q + ".running_var", &bn[i].running_var);
  }
  out.emplace_back("fc1.weight", &m.fc1_weight()->value);
  out.emplace_back("fc1.bias", &m.fc1_bias()->value);
  out.emplace_back("fc2.weight", &m.fc2_weight()->value);
  out.emplace_back("fc2.bias", &m.fc2_bias()->value);
  return out;
}

}  // namespace

std::string checkpoint_to_bytes(DeepNoseModel<float>& model) {
  const DeepNoseConfig& cfg = model.config();
  std::string out;
  out.append(kMagic, 6);
  put_u32(out, kVersion);

  std::vector<std::pair<std::string, std::int64_t>> fields;
  fields.emplace_back("side", static_cast<std::int64_t>(cfg.side));
  fields.emplace_back("in_channels", static_cast<std::int64_t>(cfg.in_channels));
  fields.emplace_back("n_conv", static_cast<std::int64_t>(cfg.conv_channels.size()));
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i)
    fields.emplace_back("conv_out_" + std::to_string(i), static_cast<std::int64_t>(cfg.conv_channels[i]));
  fields.emplace_back("hidden", static_cast<std::int64_t>(cfg.hidden));
  fields.emplace_back("outputs", static_cast<std::int64_t>(cfg.outputs));
  fields.emplace_back("dropout_ppm", static_cast<std::int64_t>(std::llround(cfg.dropout * 1e6)));
  put_u32(out, static_cast<std::uint32_t>(fields.size()));
  for (const auto& [name, value] : fields) {
    put_string(out, name);
    put_i64(out, value);
  }

  auto tensors = tensor_list(model);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (auto& [name, t] : tensors) put_tensor(out, name, *t);
  return out;
}

DeepNoseModel<float> checkpoint_from_bytes(const std::string& bytes) {
  Reader r{bytes};
  r.need(6);
  if (std::memcmp(bytes.data(), kMagic, 6) != 0) raise(ErrorKind::BadMagic, "checkpoint: bad magic");
  r.pos = 6;
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    raise(ErrorKind::VersionMismatch, "checkpoint: version " + std::to_string(version) + ", expected " +
                                          std::to_string(kVersion));

  std::map<std::string, std::int64_t> fields;
  const std::uint32_t n_fields = r.u32();
  for (std::uint32_t i = 0; i < n_fields; ++i) {
    std::string name = r.str();
    fields[name] = r.i64();
  }
  auto field = [&](const std::string& name) {
    auto it = fields.find(name);
    if (it == fields.end()) raise(ErrorKind::MalformedRecord, "checkpoint: missing config field " + name);
    if (it->second < 0) raise(ErrorKind::MalformedRecord, "checkpoint: negative config field " + name);
    return it->second;
  };

  DeepNoseConfig cfg;
  cfg.side = static_cast<std::size_t>(field("side"));
  cfg.in_channels = static_cast<std::size_t>(field("in_channels"));
  cfg.conv_channels.clear();
  const auto n_conv = static_cast<std::size_t>(field("n_conv"));
  for (std::size_t i = 0; i < n_conv; ++i)
    cfg.conv_channels.push_back(static_cast<std::size_t>(field("conv_out_" + std::to_string(i))));
  cfg.hidden = static_cast<std::size_t>(field("hidden"));
  cfg.outputs = static_cast<std::size_t>(field("outputs"));
  cfg.dropout = static_cast<double>(field("dropout_ppm")) / 1e6;

  DeepNoseModel<float> model(cfg, 0);
  auto tensors = tensor_list(model);
  const std::uint32_t n_tensors = r.u32();
  if (n_tensors != tensors.size())
    raise(ErrorKind::ConfigMismatch, "checkpoint: has " + std::to_string(n_tensors) + " tensors, model needs " +
                                         std::to_string(tensors.size()));
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = r.str();
    if (name != tensors[i].first)
      raise(ErrorKind::ConfigMismatch,
            "checkpoint: tensor " + std::to_string(i) + " is '" + name + "', expected '" + tensors[i].first + "'");
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    Tensor<float>& dst = *tensors[i].second;
    if (shape != dst.shape)
      raise(ErrorKind::ConfigMismatch, "checkpoint: tensor '" + name + "' has shape " + shape_string(shape) +
                                           ", model expects " + shape_string(dst.shape));
    for (auto& v : dst.v) v = r.f32();
  }
  if (r.pos != bytes.size()) raise(ErrorKind::MalformedRecord, "checkpoint: trailing bytes");
  return model;
}

void save_checkpoint(DeepNoseModel<float>& model, const std::filesystem::path& path) {
  write_file_atomic(path.string(), checkpoint_to_bytes(model));
}

DeepNoseModel<float> load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_bytes(read_text_file(path.string()));
}

}  // namespace deepnose
