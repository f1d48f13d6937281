#pragma once
// Pipeline commands behind the transfusor_cli tool. Each command is a plain
// function so tests can drive it without a process boundary.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transfusor/checkpoint.hpp"
#include "transfusor/config.hpp"
#include "transfusor/cvae.hpp"
#include "transfusor/data.hpp"
#include "transfusor/diffusion.hpp"
#include "transfusor/evaluation.hpp"
#include "transfusor/training.hpp"

namespace transfusor::cli {

data::FrameConvention parse_frame_convention(std::string_view text);  // UsageError
std::string_view to_string(data::FrameConvention convention);

// Every tunable of every command. Files hold flat "key = value" lines using
// the names from to_key_values(); unknown keys raise ConfigError.
struct RunConfig {
  std::uint64_t seed = 0;

  // extraction
  data::ExtractionMethod method = data::ExtractionMethod::kFixed150;
  std::size_t downsample_factor = 10;
  bool exclude_overlapping = false;
  data::FrameConvention frame_convention = data::FrameConvention::kYUp;

  // models
  ModelKind model = ModelKind::kTransfusor;
  diffusion::TransfusorConfig transfusor;
  cvae::CvaeConfig cvae;
  std::size_t diffusion_steps = 100;
  double beta_start = 1e-3;
  double beta_end = 0.15;

  // training; training.seed is ignored in favour of `seed`
  TrainingConfig training;
  std::size_t checkpoint_every = 50;  // 0: only at the end

  // sampling
  double guidance_w = 0.0;
  std::size_t generate_n = 20;

  // evaluation
  std::vector<double> thresholds{0.5, 1.0};
  std::size_t eval_n = 0;  // 0: max(50, category size)

  // visualization
  std::vector<std::size_t> viz_steps{100, 80, 60, 40, 20, 0};
  std::size_t viz_n = 50;
  std::size_t viz_nx = 100, viz_ny = 100;

  void apply(const KeyValues& kv);
  KeyValues to_key_values() const;
  void validate() const;  // ConfigError
  TrainingConfig effective_training() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

// Output root: the explicit flag, else $TRANSFUSOR_OUT, else ./runs.
std::filesystem::path output_root(const std::optional<std::filesystem::path>& flag);

// Raw tracks -> corpus directory (trajectories, labels, rejections, manifest).
data::Corpus cmd_extract(const std::filesystem::path& tracks, const std::filesystem::path& out_dir,
                         const RunConfig& config);

// Per-group tier counts and speed-ratio moments of a corpus directory.
std::string cmd_stats(const std::filesystem::path& corpus_dir);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::vector<double> losses;
};

// Writes <out_dir>/model.trsf, loss.csv and config.txt. The checkpoint is
// rewritten every checkpoint_every epochs and at the end; a non-finite loss
// aborts with TrainingError and leaves the last written checkpoint in place.
TrainResult cmd_train(const std::filesystem::path& corpus_dir, const std::filesystem::path& out_dir,
                      const RunConfig& config);

// Categories from "car/left/normal", an index, or "all". UsageError lists the
// valid names.
std::vector<ConditionLabel> parse_categories(std::string_view text);

// Sampling stream of one category; independent of which other categories a
// command covers.
SeededRng category_rng(std::uint64_t seed, const ConditionLabel& label);

struct GenerateRequest {
  std::string category = "all";
  std::optional<ModelKind> expect_kind;
};

// n trajectories per category in the trajectory export format.
void cmd_generate(const std::filesystem::path& checkpoint, const GenerateRequest& request,
                  const std::filesystem::path& out_file, const RunConfig& config);

// One coverage report per checkpoint, all in one CSV. DataError when a
// checkpoint was trained on a corpus with a different fingerprint.
std::vector<eval::CoverageReport> cmd_evaluate(std::span<const std::filesystem::path> checkpoints,
                                               const std::filesystem::path& corpus_dir,
                                               const std::filesystem::path& out_file,
                                               const RunConfig& config);

// One KDE grid file per requested step: <out_dir>/kde_<category>_k<step>.csv.
std::vector<std::filesystem::path> cmd_viz(const std::filesystem::path& checkpoint,
                                           const std::string& category,
                                           const std::filesystem::path& out_dir,
                                           const RunConfig& config);

// Raw tracks plus ground-truth sidecar: tracks.csv, truth.csv, synth_spec.txt.
data::SynthResult cmd_synth(const std::optional<std::filesystem::path>& spec_file,
                            const std::filesystem::path& out_dir, const RunConfig& config);

}  // namespace transfusor::cli
