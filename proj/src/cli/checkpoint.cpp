#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "transfusor/checkpoint.hpp"
#include "transfusor/data.hpp"
#include "transfusor/errors.hpp"
#include "transfusor/fileio.hpp"

namespace transfusor {
namespace {

constexpr std::string_view kMagic = "TRSF";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_)
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    const auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    const auto s = take(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void put_stats(KeyValues& kv, const NormalizationStats& s) {
  for (int a = 0; a < 2; ++a) {
    const std::string axis = a == 0 ? "x" : "y";
    kv.set("stats.mean_" + axis, s.mean[a]);
    kv.set("stats.std_" + axis, s.std[a]);
    kv.set_bool("stats.degenerate_" + axis, s.degenerate[a]);
  }
}

std::optional<NormalizationStats> get_stats(const KeyValues& kv) {
  if (!kv.contains("stats.mean_x")) return std::nullopt;
  NormalizationStats s;
  for (int a = 0; a < 2; ++a) {
    const std::string axis = a == 0 ? "x" : "y";
    s.mean[a] = kv.get_double("stats.mean_" + axis);
    s.std[a] = kv.get_double("stats.std_" + axis);
    s.degenerate[a] = kv.get_bool("stats.degenerate_" + axis);
  }
  return s;
}

std::vector<StoredArray> store(const nn::ParamList& params) {
  std::vector<StoredArray> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    StoredArray a{p.name, p.tensor.shape(), {}};
    a.values.reserve(p.tensor.size());
    for (double v : p.tensor.values()) a.values.push_back(static_cast<float>(v));
    out.push_back(std::move(a));
  }
  return out;
}

void assign(const std::vector<StoredArray>& arrays, const nn::ParamList& params) {
  if (arrays.size() != params.size())
    throw CheckpointError("checkpoint has " + std::to_string(arrays.size()) +
                          " parameter arrays, architecture needs " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = arrays[i];
    const auto& p = params[i];
    if (a.name != p.name)
      throw CheckpointError("checkpoint entry " + std::to_string(i) + " is '" + a.name +
                            "', expected '" + p.name + "'");
    if (a.shape != p.tensor.shape())
      throw CheckpointError("checkpoint entry '" + a.name + "' has shape " + shape_string(a.shape) +
                            ", expected " + shape_string(p.tensor.shape()));
    Tensor t = p.tensor;
    auto dst = t.mutable_values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<double>(a.values[j]);
  }
}

void append(KeyValues& kv, const KeyValues& extra) {
  for (const auto& [k, v] : extra.entries()) kv.set(k, v);
}

template <typename F>
auto metadata_field(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint metadata: ") + e.what());
  }
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  return kind == ModelKind::kCvae ? "cvae" : "transfusor";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "transfusor") return ModelKind::kTransfusor;
  if (text == "cvae") return ModelKind::kCvae;
  throw UsageError("unknown model kind '" + std::string(text) + "' (expected transfusor or cvae)");
}

std::string encode_checkpoint(const Checkpoint& c) {
  std::string out(kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(c.kind));
  const std::string meta = c.metadata.text();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  put_u32(out, static_cast<std::uint32_t>(c.arrays.size()));
  for (const auto& a : c.arrays) {
    if (a.values.size() != numel(a.shape))
      throw CheckpointError("array '" + a.name + "' has " + std::to_string(a.values.size()) +
                            " values for shape " + shape_string(a.shape));
    put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    for (std::size_t d : a.shape) {
      if (d > std::numeric_limits<std::uint32_t>::max())
        throw CheckpointError("array '" + a.name + "' extent exceeds 32 bits");
      put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (float v : a.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  put_u64(out, data::fnv1a64(out));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < kMagic.size() || r.take(kMagic.size(), "magic") != kMagic)
    throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  Checkpoint c;
  const auto kind = r.u32("model kind");
  if (kind > static_cast<std::uint32_t>(ModelKind::kCvae))
    throw CheckpointError("unknown model kind " + std::to_string(kind));
  c.kind = static_cast<ModelKind>(kind);
  const auto meta_len = r.u32("metadata length");
  const auto meta = r.take(meta_len, "metadata");
  c.metadata = metadata_field([&] { return KeyValues::parse(meta, "checkpoint metadata"); });
  const auto count = r.u32("entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredArray a;
    a.name = std::string(r.take(r.u32("name length"), "name"));
    const auto rank = r.u32("rank");
    if (rank > 8) throw CheckpointError("array '" + a.name + "' has implausible rank " + std::to_string(rank));
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(r.u32("extent"));
      n *= a.shape.back();
      if (n > r.remaining() / 4) throw CheckpointError("checkpoint truncated in array '" + a.name + "'");
    }
    a.values.reserve(n);
    for (std::size_t j = 0; j < n; ++j) a.values.push_back(r.f32("value"));
    c.arrays.push_back(std::move(a));
  }
  const std::size_t body = r.pos();
  const auto stored = r.u64("checksum");
  if (stored != data::fnv1a64(bytes.substr(0, body)))
    throw CheckpointError("checkpoint checksum mismatch (file corrupted)");
  if (r.remaining() != 0) throw CheckpointError("trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

Checkpoint make_checkpoint(const diffusion::TransfusorModel& model, const KeyValues& extra) {
  if (!model.net.initialized()) throw StateError("cannot checkpoint an uninitialized model");
  const auto& cfg = model.net.config();
  Checkpoint c;
  c.kind = ModelKind::kTransfusor;
  auto& kv = c.metadata;
  kv.set("arch.seq_len", std::uint64_t{cfg.seq_len});
  kv.set("arch.hidden", std::uint64_t{cfg.hidden});
  kv.set("arch.heads", std::uint64_t{cfg.heads});
  kv.set("arch.ff_dim", std::uint64_t{cfg.ff_dim});
  kv.set("arch.blocks", std::uint64_t{cfg.blocks});
  kv.set("arch.category_dim", std::uint64_t{cfg.category_dim});
  kv.set("arch.time_dim", std::uint64_t{cfg.time_dim});
  kv.set("arch.reduce_dim", std::uint64_t{cfg.reduce_dim});
  kv.set("schedule.steps", std::uint64_t{model.schedule.steps()});
  kv.set("schedule.beta_start", model.schedule.beta_start());
  kv.set("schedule.beta_end", model.schedule.beta_end());
  if (model.stats) put_stats(kv, *model.stats);
  append(kv, extra);
  c.arrays = store(model.net.parameters());
  return c;
}

Checkpoint make_checkpoint(const cvae::CvaeModel& model, const KeyValues& extra) {
  if (!model.net.initialized()) throw StateError("cannot checkpoint an uninitialized model");
  const auto& cfg = model.net.config();
  Checkpoint c;
  c.kind = ModelKind::kCvae;
  auto& kv = c.metadata;
  kv.set("arch.seq_len", std::uint64_t{cfg.seq_len});
  kv.set("arch.hidden", std::uint64_t{cfg.hidden});
  kv.set("arch.heads", std::uint64_t{cfg.heads});
  kv.set("arch.ff_dim", std::uint64_t{cfg.ff_dim});
  kv.set("arch.latent", std::uint64_t{cfg.latent});
  kv.set("arch.category_dim", std::uint64_t{cfg.category_dim});
  kv.set("arch.time_dim", std::uint64_t{cfg.time_dim});
  kv.set("arch.encoder_blocks", std::uint64_t{cfg.encoder_blocks});
  kv.set("arch.decoder_blocks", std::uint64_t{cfg.decoder_blocks});
  kv.set("arch.kl_weight", cfg.kl_weight);
  if (model.stats) put_stats(kv, *model.stats);
  append(kv, extra);
  c.arrays = store(model.net.parameters());
  return c;
}

diffusion::TransfusorModel restore_transfusor(const Checkpoint& c) {
  if (c.kind != ModelKind::kTransfusor)
    throw CheckpointError("checkpoint holds a " + std::string(to_string(c.kind)) +
                          " model, expected transfusor");
  const auto& kv = c.metadata;
  diffusion::TransfusorModel m;
  metadata_field([&] {
    diffusion::TransfusorConfig cfg;
    cfg.seq_len = kv.get_uint("arch.seq_len");
    cfg.hidden = kv.get_uint("arch.hidden");
    cfg.heads = kv.get_uint("arch.heads");
    cfg.ff_dim = kv.get_uint("arch.ff_dim");
    cfg.blocks = kv.get_uint("arch.blocks");
    cfg.category_dim = kv.get_uint("arch.category_dim");
    cfg.time_dim = kv.get_uint("arch.time_dim");
    cfg.reduce_dim = kv.get_uint("arch.reduce_dim");
    SeededRng rng(0);
    m.net = diffusion::TransfusorNet::init(cfg, rng);
    m.schedule = diffusion::NoiseSchedule::build(kv.get_uint("schedule.steps"),
                                                 kv.get_double("schedule.beta_start"),
                                                 kv.get_double("schedule.beta_end"));
    m.stats = get_stats(kv);
    return 0;
  });
  assign(c.arrays, m.net.parameters());
  return m;
}

cvae::CvaeModel restore_cvae(const Checkpoint& c) {
  if (c.kind != ModelKind::kCvae)
    throw CheckpointError("checkpoint holds a " + std::string(to_string(c.kind)) +
                          " model, expected cvae");
  const auto& kv = c.metadata;
  cvae::CvaeModel m;
  metadata_field([&] {
    cvae::CvaeConfig cfg;
    cfg.seq_len = kv.get_uint("arch.seq_len");
    cfg.hidden = kv.get_uint("arch.hidden");
    cfg.heads = kv.get_uint("arch.heads");
    cfg.ff_dim = kv.get_uint("arch.ff_dim");
    cfg.latent = kv.get_uint("arch.latent");
    cfg.category_dim = kv.get_uint("arch.category_dim");
    cfg.time_dim = kv.get_uint("arch.time_dim");
    cfg.encoder_blocks = kv.get_uint("arch.encoder_blocks");
    cfg.decoder_blocks = kv.get_uint("arch.decoder_blocks");
    cfg.kl_weight = kv.get_double("arch.kl_weight");
    SeededRng rng(0);
    m.net = cvae::Cvae::init(cfg, rng);
    m.stats = get_stats(kv);
    return 0;
  });
  assign(c.arrays, m.net.parameters());
  return m;
}

}  // namespace transfusor
