// transfusor_cli: synth | extract | stats | train | generate | evaluate | viz

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "transfusor/cli.hpp"
#include "transfusor/errors.hpp"
#include "transfusor/log.hpp"
#include "transfusor/runtime.hpp"

namespace fs = std::filesystem;
using namespace transfusor;

namespace {

struct Globals {
  std::optional<fs::path> config_file;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  std::vector<std::string> overrides;
  bool quiet = false;
};

// Config file, then --set key=value pairs, then dedicated flags.
cli::RunConfig resolve(const Globals& g, const KeyValues& flags) {
  cli::RunConfig c;
  if (g.config_file) c = cli::load_run_config(*g.config_file);
  KeyValues sets;
  for (const auto& s : g.overrides) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    sets.set(s.substr(0, eq), s.substr(eq + 1));
  }
  c.apply(sets);
  c.apply(flags);
  if (g.seed) c.seed = *g.seed;
  c.validate();
  return c;
}

template <typename T>
void put(KeyValues& kv, std::string_view key, const std::optional<T>& v) {
  if (!v) return;
  if constexpr (std::is_same_v<T, std::string>)
    kv.set(key, *v);
  else if constexpr (std::is_floating_point_v<T>)
    kv.set(key, static_cast<double>(*v));
  else
    kv.set(key, static_cast<std::uint64_t>(*v));
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Conditional diffusion for lane-change trajectories"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_file, "run config file (key = value lines)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--out", g.out, "output root (default $TRANSFUSOR_OUT or ./runs)");
  app.add_option("--set", g.overrides, "override a config key: --set train.epochs=10");
  app.add_flag("-q,--quiet", g.quiet, "only print warnings and errors");

  KeyValues flags;
  std::optional<std::string> method, convention, model, category, thresholds, steps, expect_kind;
  std::optional<std::size_t> epochs, batch, every, n;
  std::optional<double> lr, w;
  fs::path tracks, corpus, checkpoint, spec_file;
  std::vector<fs::path> checkpoints;
  std::optional<fs::path> target;

  auto* synth = app.add_subcommand("synth", "write synthetic raw tracks and their ground truth");
  synth->add_option("--spec", spec_file, "generator spec (default: 100 maneuvers per category)")
      ->check(CLI::ExistingFile);
  synth->add_option("--dir", target, "output directory (default <out>/synth)");

  auto* extract = app.add_subcommand("extract", "raw tracks -> labelled trajectory corpus");
  extract->add_option("tracks", tracks, "track CSV")->required();
  extract->add_option("--method", method, "fixed150 | fixed300 | dynamic");
  extract->add_option("--convention", convention, "y_up | y_down");
  extract->add_option("--dir", target, "corpus directory (default <out>/corpus)");

  auto* stats = app.add_subcommand("stats", "tier counts and speed-ratio moments of a corpus");
  stats->add_option("corpus", corpus, "corpus directory")->required()->check(CLI::ExistingDirectory);

  auto* train = app.add_subcommand("train", "train a model on a corpus");
  train->add_option("corpus", corpus, "corpus directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--model", model, "transfusor | cvae");
  train->add_option("--epochs", epochs);
  train->add_option("--batch-size", batch);
  train->add_option("--lr", lr);
  train->add_option("--checkpoint-every", every, "epochs between checkpoints (0: end only)");
  train->add_option("--dir", target, "run directory (default <out>/train_<model>)");

  auto* generate = app.add_subcommand("generate", "sample trajectories from a checkpoint");
  generate->add_option("checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  generate->add_option("--category", category, "car/left/normal, an index 0..11, or all");
  generate->add_option("-n", n, "trajectories per category");
  generate->add_option("-w,--guidance", w, "guidance weight");
  generate->add_option("--model", expect_kind, "refuse a checkpoint of another kind");
  generate->add_option("--file", target, "output CSV (default <out>/generated.csv)");

  auto* evaluate = app.add_subcommand("evaluate", "coverage report of checkpoints against a corpus");
  evaluate->add_option("checkpoints", checkpoints)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--corpus", corpus)->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--thresholds", thresholds, "comma-separated ADE thresholds in metres");
  evaluate->add_option("-n", n, "samples per category (0: max(50, category size))");
  evaluate->add_option("-w,--guidance", w, "guidance weight");
  evaluate->add_option("--file", target, "output CSV (default <out>/coverage.csv)");

  auto* viz = app.add_subcommand("viz", "KDE grids of reverse-diffusion snapshots");
  viz->add_option("checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  viz->add_option("--category", category, "car/left/normal, an index 0..11, or all");
  viz->add_option("--steps", steps, "comma-separated diffusion steps");
  viz->add_option("-n", n, "reverse chains");
  viz->add_option("-w,--guidance", w, "guidance weight");
  viz->add_option("--dir", target, "output directory (default <out>/viz)");

  CLI11_PARSE(app, argc, argv);
  if (g.quiet) set_log_level(LogLevel::kWarning);

  try {
    const fs::path root = cli::output_root(g.out);
    if (*synth) {
      const auto c = resolve(g, flags);
      const fs::path dir = target.value_or(root / "synth");
      std::optional<fs::path> spec;
      if (!spec_file.empty()) spec = spec_file;
      const auto r = cli::cmd_synth(spec, dir, c);
      std::cout << "wrote " << r.truth.size() << " maneuvers to " << dir.string() << "\n";
    } else if (*extract) {
      put(flags, "extract.method", method);
      put(flags, "extract.frame_convention", convention);
      const auto c = resolve(g, flags);
      const fs::path dir = target.value_or(root / "corpus");
      const auto corpus_out = cli::cmd_extract(tracks, dir, c);
      std::cout << "wrote " << corpus_out.size() << " trajectories to " << dir.string() << "\n";
    } else if (*stats) {
      std::cout << cli::cmd_stats(corpus);
    } else if (*train) {
      put(flags, "model", model);
      put(flags, "train.epochs", epochs);
      put(flags, "train.batch_size", batch);
      put(flags, "train.learning_rate", lr);
      put(flags, "train.checkpoint_every", every);
      const auto c = resolve(g, flags);
      const fs::path dir = target.value_or(root / ("train_" + std::string(to_string(c.model))));
      const auto r = cli::cmd_train(corpus, dir, c);
      std::cout << "trained " << r.losses.size() << " epochs, final loss " << r.losses.back()
                << ", checkpoint " << r.checkpoint.string() << "\n";
    } else if (*generate) {
      put(flags, "generate.n", n);
      put(flags, "guidance.w", w);
      const auto c = resolve(g, flags);
      cli::GenerateRequest req;
      if (category) req.category = *category;
      if (expect_kind) req.expect_kind = parse_model_kind(*expect_kind);
      const fs::path file = target.value_or(root / "generated.csv");
      cli::cmd_generate(checkpoint, req, file, c);
      std::cout << "wrote " << file.string() << "\n";
    } else if (*evaluate) {
      put(flags, "evaluate.thresholds", thresholds);
      put(flags, "evaluate.n_generated", n);
      put(flags, "guidance.w", w);
      const auto c = resolve(g, flags);
      const fs::path file = target.value_or(root / "coverage.csv");
      const auto reports = cli::cmd_evaluate(checkpoints, corpus, file, c);
      std::cout << eval::report_csv(reports);
    } else if (*viz) {
      put(flags, "viz.steps", steps);
      put(flags, "viz.n", n);
      put(flags, "guidance.w", w);
      const auto c = resolve(g, flags);
      const fs::path dir = target.value_or(root / "viz");
      const auto files = cli::cmd_viz(checkpoint, category.value_or("all"), dir, c);
      std::cout << "wrote " << files.size() << " grid files to " << dir.string() << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
