#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <functional>
#include <string>

#include "transfusor/cli.hpp"
#include "transfusor/errors.hpp"

namespace transfusor::cli {
namespace {

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

template <typename T>
std::vector<T> split_list(std::string_view key, std::string_view text) {
  std::vector<T> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view item = text.substr(pos, end - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    T v{};
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size())
      throw ConfigError("key '" + std::string(key) + "': bad list element '" + std::string(item) + "'");
    out.push_back(v);
    pos = end + 1;
  }
  return out;
}

// One config key bound to a RunConfig field.
struct Field {
  std::string key;
  std::function<void(const KeyValues&)> read;
  std::function<void(KeyValues&)> write;
};

Field size_field(std::string key, std::size_t& ref) {
  return {key, [key, &ref](const KeyValues& kv) { ref = kv.get_uint(key); },
          [key, &ref](KeyValues& kv) { kv.set(key, std::uint64_t{ref}); }};
}

Field double_field(std::string key, double& ref) {
  return {key, [key, &ref](const KeyValues& kv) { ref = kv.get_double(key); },
          [key, &ref](KeyValues& kv) { kv.set(key, ref); }};
}

Field bool_field(std::string key, bool& ref) {
  return {key, [key, &ref](const KeyValues& kv) { ref = kv.get_bool(key); },
          [key, &ref](KeyValues& kv) { kv.set_bool(key, ref); }};
}

template <typename Parse, typename Format, typename T>
Field text_field(std::string key, T& ref, Parse parse, Format format) {
  return {key,
          [key, &ref, parse](const KeyValues& kv) {
            try {
              ref = parse(kv.get(key));
            } catch (const UsageError& e) {
              throw ConfigError("key '" + key + "': " + e.what());
            }
          },
          [key, &ref, format](KeyValues& kv) { kv.set(key, std::string(format(ref))); }};
}

std::vector<Field> fields(RunConfig& c) {
  auto& t = c.transfusor;
  auto& v = c.cvae;
  std::vector<Field> f{
      {"seed", [&c](const KeyValues& kv) { c.seed = kv.get_uint("seed"); },
       [&c](KeyValues& kv) { kv.set("seed", c.seed); }},
      text_field("extract.method", c.method,
                 [](const std::string& s) { return data::parse_extraction_method(s); },
                 [](data::ExtractionMethod m) { return data::to_string(m); }),
      size_field("extract.downsample_factor", c.downsample_factor),
      bool_field("extract.exclude_overlapping", c.exclude_overlapping),
      text_field("extract.frame_convention", c.frame_convention,
                 [](const std::string& s) { return parse_frame_convention(s); },
                 [](data::FrameConvention m) { return to_string(m); }),
      text_field("model", c.model, [](const std::string& s) { return parse_model_kind(s); },
                 [](ModelKind m) { return to_string(m); }),
      size_field("transfusor.hidden", t.hidden),
      size_field("transfusor.heads", t.heads),
      size_field("transfusor.ff_dim", t.ff_dim),
      size_field("transfusor.blocks", t.blocks),
      size_field("transfusor.category_dim", t.category_dim),
      size_field("transfusor.time_dim", t.time_dim),
      size_field("transfusor.reduce_dim", t.reduce_dim),
      size_field("diffusion.steps", c.diffusion_steps),
      double_field("diffusion.beta_start", c.beta_start),
      double_field("diffusion.beta_end", c.beta_end),
      size_field("cvae.hidden", v.hidden),
      size_field("cvae.heads", v.heads),
      size_field("cvae.ff_dim", v.ff_dim),
      size_field("cvae.latent", v.latent),
      size_field("cvae.category_dim", v.category_dim),
      size_field("cvae.time_dim", v.time_dim),
      size_field("cvae.encoder_blocks", v.encoder_blocks),
      size_field("cvae.decoder_blocks", v.decoder_blocks),
      double_field("cvae.kl_weight", v.kl_weight),
      size_field("train.epochs", c.training.epochs),
      size_field("train.batch_size", c.training.batch_size),
      double_field("train.learning_rate", c.training.learning_rate),
      double_field("train.p_uncond", c.training.p_uncond),
      size_field("train.checkpoint_every", c.checkpoint_every),
      double_field("guidance.w", c.guidance_w),
      size_field("generate.n", c.generate_n),
      {"evaluate.thresholds",
       [&c](const KeyValues& kv) {
         c.thresholds = split_list<double>("evaluate.thresholds", kv.get("evaluate.thresholds"));
       },
       [&c](KeyValues& kv) { kv.set("evaluate.thresholds", join(c.thresholds)); }},
      size_field("evaluate.n_generated", c.eval_n),
      {"viz.steps",
       [&c](const KeyValues& kv) { c.viz_steps = split_list<std::size_t>("viz.steps", kv.get("viz.steps")); },
       [&c](KeyValues& kv) { kv.set("viz.steps", join(c.viz_steps)); }},
      size_field("viz.n", c.viz_n),
      size_field("viz.nx", c.viz_nx),
      size_field("viz.ny", c.viz_ny),
  };
  return f;
}

}  // namespace

data::FrameConvention parse_frame_convention(std::string_view text) {
  if (text == "y_up") return data::FrameConvention::kYUp;
  if (text == "y_down") return data::FrameConvention::kYDown;
  throw UsageError("unknown frame convention '" + std::string(text) + "' (expected y_up or y_down)");
}

std::string_view to_string(data::FrameConvention convention) {
  return convention == data::FrameConvention::kYDown ? "y_down" : "y_up";
}

void RunConfig::apply(const KeyValues& kv) {
  const auto fs = fields(*this);
  for (const auto& [key, value] : kv.entries()) {
    auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return f.key == key; });
    if (it == fs.end()) throw ConfigError("unknown config key '" + key + "'");
    it->read(kv);
  }
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv;
  RunConfig copy = *this;
  for (const auto& f : fields(copy)) f.write(kv);
  return kv;
}

void RunConfig::validate() const {
  transfusor.validate();
  cvae.validate();
  effective_training().validate();
  diffusion::NoiseSchedule::build(diffusion_steps, beta_start, beta_end);
  if (downsample_factor == 0) throw ConfigError("extract.downsample_factor must be >= 1");
  if (!(guidance_w >= 0.0)) throw ConfigError("guidance.w must be >= 0");
  if (thresholds.empty()) throw ConfigError("evaluate.thresholds needs at least one value");
  for (double t : thresholds)
    if (!(t > 0.0)) throw ConfigError("evaluate.thresholds must be positive");
  if (viz_steps.empty()) throw ConfigError("viz.steps needs at least one step");
  if (viz_n < 2) throw ConfigError("viz.n must be >= 2");
  if (viz_nx == 0 || viz_ny == 0) throw ConfigError("viz grid needs at least one cell per axis");
  if (transfusor.seq_len != cvae.seq_len) throw ConfigError("model sequence lengths differ");
}

TrainingConfig RunConfig::effective_training() const {
  TrainingConfig t = training;
  t.seed = seed;
  return t;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c;
  c.apply(KeyValues::load(path));
  return c;
}

std::filesystem::path output_root(const std::optional<std::filesystem::path>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("TRANSFUSOR_OUT"); env && *env) return env;
  return "runs";
}

}  // namespace transfusor::cli
