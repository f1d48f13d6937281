#include <algorithm>
#include <cstring>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <vector>

#include "doctest.h"
#include "transfusor/checkpoint.hpp"
#include "transfusor/cli.hpp"
#include "transfusor/errors.hpp"
#include "transfusor/fileio.hpp"
#include "transfusor/log.hpp"

using namespace transfusor;
namespace fs = std::filesystem;

namespace {

// Fresh directory removed on scope exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("transfusor_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct QuietLog {
  LogLevel saved = log_level();
  QuietLog() { set_log_level(LogLevel::kError); }
  ~QuietLog() { set_log_level(saved); }
};

cli::RunConfig tiny_run(std::uint64_t seed = 1) {
  cli::RunConfig c;
  c.seed = seed;
  c.transfusor.hidden = 16;
  c.transfusor.heads = 2;
  c.transfusor.ff_dim = 32;
  c.transfusor.blocks = 1;
  c.transfusor.category_dim = 8;
  c.transfusor.time_dim = 8;
  c.transfusor.reduce_dim = 4;
  c.cvae.hidden = 16;
  c.cvae.heads = 2;
  c.cvae.ff_dim = 32;
  c.cvae.latent = 4;
  c.cvae.category_dim = 8;
  c.cvae.time_dim = 8;
  c.diffusion_steps = 10;
  c.beta_end = 0.3;
  c.training.epochs = 2;
  c.training.batch_size = 16;
  c.checkpoint_every = 1;
  c.generate_n = 3;
  c.eval_n = 5;
  c.viz_n = 6;
  c.viz_steps = {10, 5, 0};
  c.viz_nx = c.viz_ny = 8;
  return c;
}

diffusion::TransfusorModel small_transfusor(std::uint64_t seed) {
  SeededRng rng(seed);
  const auto c = tiny_run();
  diffusion::TransfusorModel m;
  m.net = diffusion::TransfusorNet::init(c.transfusor, rng);
  m.schedule = diffusion::NoiseSchedule::build(10, 1e-2, 0.3);
  NormalizationStats s;
  s.mean = {1.0 / 3.0, -0.1};
  s.std = {2.5, 0.7};
  s.degenerate = {false, true};
  m.stats = s;
  return m;
}

// Writes a synthetic corpus pipeline into dir: synth -> extract.
data::Corpus make_corpus(const fs::path& dir, std::uint64_t seed, std::size_t per_category) {
  write_file_atomic(dir / "spec.txt", "per_category = " + std::to_string(per_category) + "\n");
  auto c = tiny_run(seed);
  cli::cmd_synth(dir / "spec.txt", dir / "synth", c);
  return cli::cmd_extract(dir / "synth" / "tracks.csv", dir / "corpus", c);
}

}  // namespace

TEST_CASE("run config round trip and errors") {
  auto c = tiny_run(42);
  c.thresholds = {0.25, 0.5, 2.0};
  c.model = ModelKind::kCvae;
  c.frame_convention = data::FrameConvention::kYDown;
  const auto text = c.to_key_values().text();
  cli::RunConfig back;
  back.apply(KeyValues::parse(text));
  CHECK(back.to_key_values().text() == text);
  CHECK(back.seed == 42);
  CHECK(back.thresholds == std::vector<double>{0.25, 0.5, 2.0});
  CHECK(back.effective_training().seed == 42);

  // Defaults document themselves.
  const auto defaults = cli::RunConfig{}.to_key_values();
  CHECK(defaults.get("evaluate.thresholds") == "0.5,1");
  CHECK(defaults.get("viz.steps") == "100,80,60,40,20,0");
  CHECK(defaults.get_uint("viz.n") == 50);
  CHECK(defaults.get_double("guidance.w") == 0.0);
  CHECK(defaults.get_uint("train.epochs") == 2500);
  CHECK(defaults.get_double("cvae.kl_weight") == 0.01);

  CHECK_THROWS_AS(back.apply(KeyValues::parse("nope = 1")), ConfigError);
  CHECK_THROWS_AS(back.apply(KeyValues::parse("viz.steps = 1,,2")), ConfigError);
  CHECK_THROWS_AS(back.apply(KeyValues::parse("model = gan")), ConfigError);
  CHECK_THROWS_AS(back.apply(KeyValues::parse("train.epochs = -3")), ConfigError);
  auto bad = tiny_run();
  bad.thresholds = {};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_run();
  bad.beta_end = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_run();
  bad.guidance_w = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("output root") {
  CHECK(cli::output_root(fs::path("x")) == fs::path("x"));
  ::setenv("TRANSFUSOR_OUT", "/tmp/elsewhere", 1);
  CHECK(cli::output_root(std::nullopt) == fs::path("/tmp/elsewhere"));
  ::unsetenv("TRANSFUSOR_OUT");
  CHECK(cli::output_root(std::nullopt) == fs::path("runs"));
}

TEST_CASE("categories") {
  CHECK(cli::parse_categories("all").size() == 12);
  CHECK(cli::parse_categories("truck/right/over").front().index() == 11);
  CHECK(cli::parse_categories("4").front().index() == 4);
  try {
    cli::parse_categories("car/up/fast");
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    for (std::size_t i = 0; i < kCategoryCount; ++i)
      CHECK(msg.find(ConditionLabel::from_index(i).to_string()) != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip") {
  TempDir dir("ckpt");
  const auto model = small_transfusor(3);
  KeyValues extra;
  extra.set("seed", std::uint64_t{3});
  extra.set(kCorpusFingerprintKey, std::string("abc"));
  const auto ckpt = make_checkpoint(model, extra);
  save_checkpoint(dir.path / "m.trsf", ckpt);
  const auto bytes = read_file(dir.path / "m.trsf");
  CHECK(bytes.substr(0, 4) == "TRSF");

  const auto loaded = load_checkpoint(dir.path / "m.trsf");
  CHECK(loaded.kind == ModelKind::kTransfusor);
  CHECK(loaded.metadata.text() == ckpt.metadata.text());
  REQUIRE(loaded.arrays.size() == ckpt.arrays.size());
  for (std::size_t i = 0; i < ckpt.arrays.size(); ++i) {
    CHECK(loaded.arrays[i].name == ckpt.arrays[i].name);
    CHECK(loaded.arrays[i].shape == ckpt.arrays[i].shape);
    CHECK(std::memcmp(loaded.arrays[i].values.data(), ckpt.arrays[i].values.data(),
                      ckpt.arrays[i].values.size() * sizeof(float)) == 0);
  }

  const auto restored = restore_transfusor(loaded);
  // Every parameter is the float rounding of the original.
  const auto orig = model.net.parameters();
  const auto back = restored.net.parameters();
  REQUIRE(orig.size() == back.size());
  for (std::size_t i = 0; i < orig.size(); ++i)
    for (std::size_t j = 0; j < orig[i].tensor.size(); ++j)
      CHECK(back[i].tensor[j] == static_cast<double>(static_cast<float>(orig[i].tensor[j])));
  CHECK(restored.schedule.steps() == 10);
  CHECK(restored.schedule.beta_end() == 0.3);
  REQUIRE(restored.stats);
  CHECK(restored.stats->mean[0] == 1.0 / 3.0);
  CHECK(restored.stats->std[1] == 0.7);
  CHECK(restored.stats->degenerate[1]);
  CHECK(loaded.metadata.get(kCorpusFingerprintKey) == "abc");

  // A restored model re-encodes to the same bytes.
  CHECK(encode_checkpoint(make_checkpoint(restored, extra)) == bytes);
  CHECK_THROWS_AS(restore_cvae(loaded), CheckpointError);
}

TEST_CASE("checkpoint corruption is refused") {
  const auto bytes = encode_checkpoint(make_checkpoint(small_transfusor(4)));
  REQUIRE_NOTHROW(decode_checkpoint(bytes));
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), CheckpointError);
  auto version = bytes;
  version[4] = 2;
  try {
    decode_checkpoint(version);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("version 2") != std::string::npos);
  }
  auto kind = bytes;
  kind[8] = 7;
  CHECK_THROWS_AS(decode_checkpoint(kind), CheckpointError);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(decode_checkpoint(flipped), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint(""), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.trsf"), IoError);

  // Architecture metadata that disagrees with the stored arrays.
  auto c = make_checkpoint(small_transfusor(4));
  c.metadata.set("arch.hidden", std::uint64_t{32});
  CHECK_THROWS_AS(restore_transfusor(c), CheckpointError);
}

TEST_CASE("cvae checkpoint round trip") {
  SeededRng rng(5);
  cvae::CvaeModel m;
  m.net = cvae::Cvae::init(tiny_run().cvae, rng);
  m.stats = NormalizationStats{};
  const auto bytes = encode_checkpoint(make_checkpoint(m));
  const auto back = restore_cvae(decode_checkpoint(bytes));
  CHECK(back.net.config().latent == 4);
  CHECK(back.net.config().kl_weight == 0.01);
  CHECK(encode_checkpoint(make_checkpoint(back)) == bytes);
  CHECK_THROWS_AS(restore_transfusor(decode_checkpoint(bytes)), CheckpointError);
}

TEST_CASE("synth and extract recover every change") {
  QuietLog quiet;
  TempDir dir("cli_extract");
  const auto corpus = make_corpus(dir.path, 7, 3);
  const auto truth = data::read_truth(dir.path / "synth" / "truth.csv");
  CHECK(truth.size() == 36);
  CHECK(corpus.size() == truth.size());
  std::set<std::pair<std::int64_t, std::int64_t>> expected, found;
  for (const auto& t : truth) expected.insert({t.vehicle_id, t.cbt_frame});
  for (const auto& it : corpus.items)
    found.insert({it.trajectory.source.vehicle_id, it.trajectory.source.cbt_frame});
  CHECK(found == expected);
  for (const auto& it : corpus.items) CHECK(it.trajectory.size() == 15);
  CHECK(fs::exists(dir.path / "corpus" / "manifest.txt"));
  CHECK(cli::cmd_stats(dir.path / "corpus").find("36 trajectories") != std::string::npos);

  // Same seed, same files.
  TempDir again("cli_extract_again");
  make_corpus(again.path, 7, 3);
  CHECK(read_file(again.path / "synth" / "tracks.csv") == read_file(dir.path / "synth" / "tracks.csv"));
  CHECK(read_file(again.path / "corpus" / "manifest.txt") == read_file(dir.path / "corpus" / "manifest.txt"));

  CHECK_THROWS_AS(cli::cmd_extract(dir.path / "missing.csv", dir.path / "c2", tiny_run()), IoError);
  write_file_atomic(dir.path / "bad_spec.txt", "per_category = 0\n");
  CHECK_THROWS_AS(cli::cmd_synth(dir.path / "bad_spec.txt", dir.path / "s2", tiny_run()), UsageError);
}

TEST_CASE("train, generate, evaluate, viz") {
  QuietLog quiet;
  TempDir dir("cli_pipeline");
  make_corpus(dir.path, 8, 2);
  const auto corpus = dir.path / "corpus";
  auto config = tiny_run(11);

  const auto a = cli::cmd_train(corpus, dir.path / "a", config);
  const auto b = cli::cmd_train(corpus, dir.path / "b", config);
  REQUIRE(a.losses.size() == 2);
  CHECK(a.losses == b.losses);
  CHECK(read_file(dir.path / "a" / "loss.csv") == read_file(dir.path / "b" / "loss.csv"));
  CHECK(read_file(a.checkpoint) == read_file(b.checkpoint));
  CHECK(read_file(dir.path / "a" / "config.txt").find("seed = 11") != std::string::npos);
  const auto ckpt = load_checkpoint(a.checkpoint);
  CHECK(ckpt.metadata.get_uint("epochs_completed") == 2);
  CHECK(ckpt.metadata.get(kCorpusFingerprintKey) ==
        data::corpus_fingerprint(data::read_corpus(corpus)));

  auto cvae_config = config;
  cvae_config.model = ModelKind::kCvae;
  const auto c = cli::cmd_train(corpus, dir.path / "c", cvae_config);
  CHECK(load_checkpoint(c.checkpoint).kind == ModelKind::kCvae);

  SUBCASE("generate") {
    cli::cmd_generate(a.checkpoint, {"car/left/normal", std::nullopt}, dir.path / "g1.csv", config);
    cli::cmd_generate(a.checkpoint, {"car/left/normal", std::nullopt}, dir.path / "g2.csv", config);
    const auto g1 = read_file(dir.path / "g1.csv");
    CHECK(g1 == read_file(dir.path / "g2.csv"));
    CHECK(std::count(g1.begin(), g1.end(), '\n') == 1 + 3 * 15);
    // A category's samples do not depend on the other categories requested.
    cli::cmd_generate(a.checkpoint, {"all", std::nullopt}, dir.path / "all.csv", config);
    const auto all = read_file(dir.path / "all.csv");
    CHECK(std::count(all.begin(), all.end(), '\n') == 1 + 12 * 3 * 15);
    std::size_t pos = g1.find('\n') + 1;
    while (pos < g1.size()) {
      const std::size_t end = g1.find('\n', pos);
      const std::string row = g1.substr(pos, end - pos);
      CHECK(all.find(row.substr(row.find(',')) + '\n') != std::string::npos);
      pos = end + 1;
    }

    auto none = config;
    none.generate_n = 0;
    cli::cmd_generate(a.checkpoint, {"all", std::nullopt}, dir.path / "empty.csv", none);
    CHECK(read_file(dir.path / "empty.csv") == "traj_id,category_index,point_index,x,y\n");

    CHECK_THROWS_AS(cli::cmd_generate(a.checkpoint, {"all", ModelKind::kCvae}, dir.path / "x.csv", config),
                    UsageError);
    CHECK_THROWS_AS(cli::cmd_generate(a.checkpoint, {"bogus", std::nullopt}, dir.path / "x.csv", config),
                    UsageError);
    CHECK_FALSE(fs::exists(dir.path / "x.csv"));
    cli::cmd_generate(c.checkpoint, {"3", ModelKind::kCvae}, dir.path / "cv.csv", config);
    CHECK(fs::exists(dir.path / "cv.csv"));
  }

  SUBCASE("evaluate") {
    const std::vector<fs::path> models{a.checkpoint, c.checkpoint};
    const auto reports = cli::cmd_evaluate(models, corpus, dir.path / "cov.csv", config);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].method == "transfusor");
    CHECK(reports[1].method == "cvae");
    REQUIRE(reports[0].rows.size() == reports[1].rows.size());
    for (const auto& r : reports)
      for (std::size_t i = 0; i + 1 < r.rows.size(); i += 2) {
        CHECK(r.rows[i].label == r.rows[i + 1].label);
        if (r.rows[i].value) {
          CHECK(r.rows[i].value->c1 <= r.rows[i + 1].value->c1);
          CHECK(r.rows[i].value->c2 <= r.rows[i + 1].value->c2);
        }
      }
    const auto csv = read_file(dir.path / "cov.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 24);

    // A checkpoint from another corpus is refused.
    TempDir other("cli_other");
    make_corpus(other.path, 99, 2);
    CHECK_THROWS_AS(cli::cmd_evaluate(models, other.path / "corpus", dir.path / "cov2.csv", config),
                    DataError);
    CHECK_FALSE(fs::exists(dir.path / "cov2.csv"));
  }

  SUBCASE("viz") {
    const auto files = cli::cmd_viz(a.checkpoint, "car/right/low", dir.path / "viz", config);
    REQUIRE(files.size() == 3);
    for (const auto& f : files) {
      const auto text = read_file(f);
      CHECK(text.rfind("# x_min=", 0) == 0);
      CHECK(std::count(text.begin(), text.end(), '\n') == 2 + 64);
    }
    CHECK(files[0].filename() == "kde_6_k10.csv");

    // Step 0 holds the same endpoints generate writes for the same seed.
    auto same = config;
    same.generate_n = config.viz_n;
    cli::cmd_generate(a.checkpoint, {"car/right/low", std::nullopt}, dir.path / "gen.csv", same);
    const auto model = restore_transfusor(load_checkpoint(a.checkpoint));
    SeededRng r1 = cli::category_rng(config.seed, ConditionLabel::from_index(6));
    const std::vector<std::size_t> zero{0};
    const auto snap = diffusion::snapshot_diffusion(model, ConditionLabel::from_index(6), config.viz_n,
                                                    zero, 0.0, r1);
    std::vector<eval::LabeledSet> sets{{ConditionLabel::from_index(6), snap.at(0)}};
    CHECK(eval::trajectories_csv(sets) == read_file(dir.path / "gen.csv"));

    auto far = config;
    far.viz_steps = {11};
    CHECK_THROWS_AS(cli::cmd_viz(a.checkpoint, "0", dir.path / "viz2", far), UsageError);
    CHECK_THROWS_AS(cli::cmd_viz(c.checkpoint, "0", dir.path / "viz3", config), UsageError);
  }
}
