#include <cmath>
#include <cstdio>
#include <string>

#include "transfusor/cli.hpp"
#include "transfusor/errors.hpp"
#include "transfusor/fileio.hpp"
#include "transfusor/log.hpp"

namespace transfusor::cli {
namespace {

constexpr std::uint64_t kInitStream = 0x494e4954;
constexpr std::uint64_t kSampleStream = 0x53414d50;

void make_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

std::string category_list() {
  std::string out;
  for (std::size_t i = 0; i < kCategoryCount; ++i)
    out += "\n  " + std::to_string(i) + "  " + ConditionLabel::from_index(i).to_string();
  return out;
}

std::size_t common_length(const std::vector<DeltaTrajectory>& deltas) {
  if (deltas.empty()) throw DataError("corpus has no trajectories");
  const std::size_t n = deltas.front().increments.size();
  for (const auto& d : deltas)
    if (d.increments.size() != n)
      throw DataError("training needs equal-length trajectories; found " + std::to_string(n) +
                      " and " + std::to_string(d.increments.size()) +
                      " increments (use a fixed-window corpus)");
  return n;
}

struct LoadedModel {
  ModelKind kind;
  std::optional<diffusion::TransfusorModel> transfusor;
  std::optional<cvae::CvaeModel> cvae;
  KeyValues metadata;
};

LoadedModel load_model(const std::filesystem::path& path) {
  const Checkpoint c = load_checkpoint(path);
  LoadedModel m{c.kind, std::nullopt, std::nullopt, c.metadata};
  if (c.kind == ModelKind::kTransfusor)
    m.transfusor = restore_transfusor(c);
  else
    m.cvae = restore_cvae(c);
  return m;
}

std::vector<Trajectory> sample_label(const LoadedModel& m, const ConditionLabel& label,
                                     std::size_t n, double w, SeededRng& rng) {
  const auto deltas = m.transfusor ? diffusion::sample_trajectories(*m.transfusor, label, n, w, rng)
                                   : cvae::sample(*m.cvae, label, n, rng);
  std::vector<Trajectory> out;
  out.reserve(deltas.size());
  for (const auto& d : deltas) out.push_back(from_deltas(d));
  return out;
}

std::string loss_csv(const std::vector<double>& losses) {
  std::string out = "epoch,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i)
    out += std::to_string(i + 1) + ',' + format_double(losses[i]) + '\n';
  return out;
}

}  // namespace

SeededRng category_rng(std::uint64_t seed, const ConditionLabel& label) {
  return SeededRng(seed).fork(kSampleStream + label.index());
}

data::Corpus cmd_extract(const std::filesystem::path& tracks, const std::filesystem::path& out_dir,
                         const RunConfig& config) {
  config.validate();
  const auto canonical = data::canonicalize_frame(data::ingest_tracks(tracks), config.frame_convention);
  data::ExtractOptions options;
  options.method = config.method;
  options.downsample_factor = config.downsample_factor;
  options.exclude_overlapping = config.exclude_overlapping;
  auto corpus = data::extract_corpus(canonical, options);
  data::write_corpus(out_dir, corpus);
  log_info("extracted " + std::to_string(corpus.size()) + " trajectories (" +
           std::to_string(corpus.rejections.size()) + " rejected) into " + out_dir.string());
  return corpus;
}

std::string cmd_stats(const std::filesystem::path& corpus_dir) {
  const auto corpus = data::read_corpus(corpus_dir);
  const auto m = data::corpus_stats(corpus);
  std::string out = "method " + std::string(data::to_string(m.method)) + ", " +
                    std::to_string(m.total) + " trajectories, " + std::to_string(m.rejections) +
                    " rejected\n";
  char line[160];
  for (auto c : {VehicleClass::kCar, VehicleClass::kTruck}) {
    const auto& r = m.stats.of(c);
    std::snprintf(line, sizeof line, "%-5s speed ratio mean %.5f std %.5f (n=%zu)\n",
                  std::string(to_string(c)).c_str(), r.mean, r.stddev, r.count);
    out += line;
  }
  out += "direction class     low  normal    over   total\n";
  for (auto d : {Direction::kLeft, Direction::kRight})
    for (auto c : {VehicleClass::kCar, VehicleClass::kTruck}) {
      const auto& g = m.group(d, c);
      std::snprintf(line, sizeof line, "%-9s %-5s %7zu %7zu %7zu %7zu\n",
                    std::string(to_string(d)).c_str(), std::string(to_string(c)).c_str(),
                    g.counts[0], g.counts[1], g.counts[2], g.total);
      out += line;
    }
  return out;
}

TrainResult cmd_train(const std::filesystem::path& corpus_dir, const std::filesystem::path& out_dir,
                      const RunConfig& config) {
  config.validate();
  const auto corpus = data::read_corpus(corpus_dir);
  const auto deltas = corpus.deltas();
  const std::size_t seq_len = common_length(deltas);
  const auto stats = fit_normalization(deltas);
  const auto dataset = make_dataset(deltas, corpus.labels(), stats);

  make_dir(out_dir);
  RunConfig effective = config;
  effective.transfusor.seq_len = effective.cvae.seq_len = seq_len;
  write_file_atomic(out_dir / "config.txt", effective.to_key_values().text());

  KeyValues extra;
  extra.set("seed", config.seed);
  extra.set(kCorpusFingerprintKey, data::corpus_fingerprint(corpus));
  extra.set("corpus_size", std::uint64_t{corpus.size()});

  SeededRng init_rng = SeededRng(config.seed).fork(kInitStream);
  std::optional<diffusion::TransfusorModel> tm;
  std::optional<cvae::CvaeModel> cm;
  if (config.model == ModelKind::kTransfusor) {
    tm.emplace();
    tm->net = diffusion::TransfusorNet::init(effective.transfusor, init_rng);
    tm->schedule = diffusion::NoiseSchedule::build(config.diffusion_steps, config.beta_start, config.beta_end);
    tm->stats = stats;
  } else {
    cm.emplace();
    cm->net = cvae::Cvae::init(effective.cvae, init_rng);
    cm->stats = stats;
  }

  TrainResult result;
  result.checkpoint = out_dir / "model.trsf";
  auto save = [&](std::size_t epochs_done) {
    KeyValues meta = extra;
    meta.set("epochs_completed", std::uint64_t{epochs_done});
    save_checkpoint(result.checkpoint, tm ? make_checkpoint(*tm, meta) : make_checkpoint(*cm, meta));
    write_file_atomic(out_dir / "loss.csv", loss_csv(result.losses));
  };
  const auto on_epoch = [&](const EpochRecord& r) {
    result.losses.push_back(r.mean_loss);
    log_info("epoch " + std::to_string(r.epoch) + " loss " + format_double(r.mean_loss));
    if (config.checkpoint_every && r.epoch % config.checkpoint_every == 0) save(r.epoch);
    return true;
  };
  const auto training = effective.effective_training();
  try {
    if (tm)
      diffusion::train(*tm, dataset, training, on_epoch);
    else
      cvae::train(*cm, dataset, training, on_epoch);
  } catch (const TrainingError& e) {
    write_file_atomic(out_dir / "loss.csv", loss_csv(result.losses));
    const bool kept = std::filesystem::exists(result.checkpoint);
    throw TrainingError(std::string(e.what()) + " after " + std::to_string(result.losses.size()) +
                        " epochs; " +
                        (kept ? "last checkpoint kept at " + result.checkpoint.string()
                              : std::string("no checkpoint was written")));
  }
  save(result.losses.size());
  return result;
}

std::vector<ConditionLabel> parse_categories(std::string_view text) {
  if (text == "all") {
    std::vector<ConditionLabel> out;
    for (const auto& l : report_order()) out.push_back(l);
    return out;
  }
  try {
    return {ConditionLabel::parse(text)};
  } catch (const Error&) {
    throw UsageError("unknown category '" + std::string(text) +
                     "'; use 'all', an index or one of:" + category_list());
  }
}

void cmd_generate(const std::filesystem::path& checkpoint, const GenerateRequest& request,
                  const std::filesystem::path& out_file, const RunConfig& config) {
  config.validate();
  const auto labels = parse_categories(request.category);
  const auto model = load_model(checkpoint);
  if (request.expect_kind && *request.expect_kind != model.kind)
    throw UsageError("checkpoint '" + checkpoint.string() + "' holds a " +
                     std::string(to_string(model.kind)) + " model, not " +
                     std::string(to_string(*request.expect_kind)));
  std::vector<eval::LabeledSet> sets;
  for (const auto& label : labels) {
    SeededRng rng = category_rng(config.seed, label);
    sets.push_back({label, sample_label(model, label, config.generate_n, config.guidance_w, rng)});
  }
  if (out_file.has_parent_path()) make_dir(out_file.parent_path());
  eval::write_trajectories(out_file, sets);
}

std::vector<eval::CoverageReport> cmd_evaluate(std::span<const std::filesystem::path> checkpoints,
                                               const std::filesystem::path& corpus_dir,
                                               const std::filesystem::path& out_file,
                                               const RunConfig& config) {
  config.validate();
  if (checkpoints.empty()) throw UsageError("evaluate needs at least one checkpoint");
  const auto corpus = data::read_corpus(corpus_dir);
  const std::string fingerprint = data::corpus_fingerprint(corpus);
  std::vector<eval::CoverageReport> reports;
  for (const auto& path : checkpoints) {
    const auto model = load_model(path);
    const auto trained_on = model.metadata.find(kCorpusFingerprintKey);
    if (!trained_on || *trained_on != fingerprint)
      throw DataError("checkpoint '" + path.string() + "' was trained on corpus " +
                      trained_on.value_or("<unknown>") + " but '" + corpus_dir.string() +
                      "' has fingerprint " + fingerprint +
                      "; its normalization statistics would not match");
    std::string method(to_string(model.kind));
    for (const auto& r : reports)
      if (r.method == method) method += ":" + path.stem().string();
    const eval::CategorySampler sampler = [&](const ConditionLabel& label, std::size_t n) {
      SeededRng rng = category_rng(config.seed, label);
      return sample_label(model, label, n, config.guidance_w, rng);
    };
    reports.push_back(eval::table2_report(corpus, method, sampler,
                                          {.thresholds = config.thresholds, .n_generated = config.eval_n}));
  }
  if (out_file.has_parent_path()) make_dir(out_file.parent_path());
  eval::write_report(out_file, reports);
  return reports;
}

std::vector<std::filesystem::path> cmd_viz(const std::filesystem::path& checkpoint,
                                           const std::string& category,
                                           const std::filesystem::path& out_dir,
                                           const RunConfig& config) {
  config.validate();
  const auto labels = parse_categories(category);
  const auto model = load_model(checkpoint);
  if (!model.transfusor)
    throw UsageError("viz needs a transfusor checkpoint; '" + checkpoint.string() + "' holds a " +
                     std::string(to_string(model.kind)) + " model");
  const std::size_t K = model.transfusor->schedule.steps();
  for (std::size_t s : config.viz_steps)
    if (s > K)
      throw UsageError("viz step " + std::to_string(s) + " exceeds the model's " + std::to_string(K) +
                       " diffusion steps");
  make_dir(out_dir);
  eval::KdeOptions kde;
  kde.nx = config.viz_nx;
  kde.ny = config.viz_ny;
  std::vector<std::filesystem::path> written;
  for (const auto& label : labels) {
    SeededRng rng = category_rng(config.seed, label);
    const auto snaps = diffusion::snapshot_diffusion(*model.transfusor, label, config.viz_n,
                                                     config.viz_steps, config.guidance_w, rng);
    for (std::size_t i = 0; i < config.viz_steps.size(); ++i) {
      const std::size_t k = config.viz_steps[i];
      const auto points = eval::pooled_points(snaps.at(k));
      const auto path = out_dir / ("kde_" + std::to_string(label.index()) + "_k" + std::to_string(k) + ".csv");
      eval::write_kde(path, eval::kde_grid(points, kde), i, k);
      written.push_back(path);
    }
  }
  return written;
}

data::SynthResult cmd_synth(const std::optional<std::filesystem::path>& spec_file,
                            const std::filesystem::path& out_dir, const RunConfig& config) {
  const data::SynthSpec spec =
      spec_file ? data::parse_synth_spec(read_file(*spec_file)) : data::SynthSpec::uniform(100);
  spec.validate();
  SeededRng rng(config.seed);
  auto result = data::synth_corpus(spec, rng);
  make_dir(out_dir);
  data::write_tracks(out_dir / "tracks.csv", result.raw);
  data::write_truth(out_dir / "truth.csv", result.truth);
  write_file_atomic(out_dir / "synth_spec.txt", data::synth_spec_text(spec));
  return result;
}

}  // namespace transfusor::cli
