#include <unistd.h>

#include <atomic>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "gbcc/checkpoint.hpp"
#include "gbcc/data.hpp"
#include "gbcc/errors.hpp"
#include "gbcc/matrix.hpp"
#include "gbcc/model.hpp"
#include "helpers.hpp"

using gbcc::Matrix;
namespace ckpt = gbcc::ckpt;
namespace model = gbcc::model;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("gbcc_ckpt_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

bool bit_identical(const Matrix& a, const Matrix& b) {
  return a.rows == b.rows && a.cols == b.cols &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

// Small, fast training setup over deterministic synthetic views.
std::vector<Matrix> toy_views() {
  gbcc::data::SynthSpec spec;
  spec.clusters = 2;
  spec.per_cluster = 10;
  spec.views = 2;
  spec.dims = {6, 5};
  spec.sigma = 0.05;
  spec.seed = 31;
  return gbcc::data::synth(spec).views;
}

model::TrainConfig toy_config() {
  model::TrainConfig cfg;
  cfg.p = 2;
  cfg.d = 3;
  cfg.hidden = {5};
  cfg.batch_size = 20;
  cfg.epochs = 4;
  cfg.seed = 13;
  cfg.lr = 1e-3;
  return cfg;
}

}  // namespace

TEST_CASE("config json round-trip") {
  model::TrainConfig cfg;
  cfg.p = 4;
  cfg.tau = 0.25;
  cfg.lambda = 0.5;
  cfg.con_weight = 0.25;
  cfg.d = 48;
  cfg.temperature = 0.7;
  cfg.batch_size = 128;
  cfg.epochs = 17;
  cfg.seed = 99;
  cfg.lr = 3e-4;
  cfg.variant = model::NetVariant::linear;
  cfg.latent_norm = model::LatentNorm::l2row;
  cfg.hidden = {64, 32};
  cfg.debug_literal = true;

  auto back = ckpt::config_from_json(ckpt::config_to_json(cfg));
  CHECK(back.p == cfg.p);
  CHECK(back.tau == cfg.tau);
  CHECK(back.lambda == cfg.lambda);
  CHECK(back.con_weight == cfg.con_weight);
  CHECK(back.d == cfg.d);
  CHECK(back.temperature == cfg.temperature);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.seed == cfg.seed);
  CHECK(back.lr == cfg.lr);
  CHECK(back.variant == cfg.variant);
  CHECK(back.latent_norm == cfg.latent_norm);
  CHECK(back.hidden == cfg.hidden);
  CHECK(back.debug_literal == cfg.debug_literal);
}

TEST_CASE("config json rejects bad input") {
  CHECK_THROWS_WITH_AS(ckpt::config_from_json(R"({"p": 2, "warp": 9})"),
                       doctest::Contains("warp"), gbcc::config_error);
  CHECK_THROWS_AS(ckpt::config_from_json("{nope"), gbcc::config_error);
  CHECK_THROWS_AS(ckpt::config_from_json(R"([1, 2])"), gbcc::config_error);
  // Values must still satisfy the validation rules.
  CHECK_THROWS_AS(ckpt::config_from_json(R"({"tau": 3.0})"), gbcc::config_error);
  CHECK_THROWS_AS(ckpt::config_from_json(R"({"variant": "cnn"})"), gbcc::config_error);
}

TEST_CASE("config file loading") {
  TempDir tmp;
  const fs::path p = tmp.path / "cfg.json";
  {
    std::ofstream out(p);
    out << R"({"p": 8, "d": 24, "hidden": [10, 4]})";
  }
  auto cfg = ckpt::load_config_file(p);
  CHECK(cfg.p == 8);
  CHECK(cfg.d == 24);
  CHECK(cfg.hidden == std::vector<std::int64_t>{10, 4});
  CHECK(cfg.tau == 0.1);  // untouched defaults survive
  CHECK_THROWS_AS(ckpt::load_config_file(tmp.path / "absent.json"), gbcc::config_error);
}

TEST_CASE("checkpoint save and load round-trip") {
  TempDir tmp;
  auto views = toy_views();
  model::Trainer trainer(views, toy_config());
  for (int e = 0; e < 2; ++e) trainer.train_epoch();

  const fs::path p = tmp.path / "t.gbck";
  ckpt::save(p, trainer);
  auto ck = ckpt::load(p);

  CHECK(ck.epoch == 2);
  CHECK(ck.adam_step == trainer.optimizer().step_count());
  CHECK(ck.adam_step > 0);
  CHECK(ck.view_dims == std::vector<std::int64_t>{6, 5});
  CHECK(ck.cfg.seed == 13);
  CHECK(ck.cfg.hidden == std::vector<std::int64_t>{5});

  auto named = trainer.named_parameters();
  REQUIRE(ck.params.size() == named.size());
  REQUIRE(ck.adam_m.size() == named.size());
  REQUIRE(ck.adam_v.size() == named.size());
  for (std::size_t i = 0; i < named.size(); ++i) {
    CHECK(ck.params[i].first == named[i].first);
    CHECK(bit_identical(ck.params[i].second, named[i].second->value));
  }
  auto m = trainer.optimizer().first_moments();
  auto v = trainer.optimizer().second_moments();
  for (std::size_t i = 0; i < named.size(); ++i) {
    CHECK(bit_identical(ck.adam_m[i], m[i]));
    CHECK(bit_identical(ck.adam_v[i], v[i]));
  }
}

TEST_CASE("restored trainer continues exactly like an unbroken run") {
  TempDir tmp;
  auto views = toy_views();
  auto cfg = toy_config();

  // Unbroken: 4 epochs straight through.
  model::Trainer full(views, cfg);
  std::vector<model::EpochSummary> full_log;
  for (int e = 0; e < 4; ++e) full_log.push_back(full.train_epoch());

  // Split: 2 epochs, checkpoint, restore, 2 more.
  model::Trainer head(views, cfg);
  for (int e = 0; e < 2; ++e) head.train_epoch();
  const fs::path p = tmp.path / "mid.gbck";
  ckpt::save(p, head);

  auto restored = ckpt::restore(ckpt::load(p), views);
  CHECK(restored.epochs_done() == 2);
  std::vector<model::EpochSummary> tail_log;
  for (int e = 0; e < 2; ++e) tail_log.push_back(restored.train_epoch());

  for (int e = 0; e < 2; ++e) {
    CHECK(tail_log[e].epoch == full_log[e + 2].epoch);
    CHECK(tail_log[e].mean_con == full_log[e + 2].mean_con);
    CHECK(tail_log[e].mean_rec == full_log[e + 2].mean_rec);
    CHECK(tail_log[e].mean_total == full_log[e + 2].mean_total);
  }
  auto full_named = full.named_parameters();
  auto rest_named = restored.named_parameters();
  REQUIRE(full_named.size() == rest_named.size());
  for (std::size_t i = 0; i < full_named.size(); ++i)
    CHECK(bit_identical(full_named[i].second->value, rest_named[i].second->value));
}

TEST_CASE("untrained checkpoint carries no moments") {
  TempDir tmp;
  auto views = toy_views();
  model::Trainer trainer(views, toy_config());
  const fs::path p = tmp.path / "fresh.gbck";
  ckpt::save(p, trainer);
  auto ck = ckpt::load(p);
  CHECK(ck.epoch == 0);
  CHECK(ck.adam_step == 0);
  CHECK(ck.adam_m.empty());
  CHECK(ck.adam_v.empty());

  auto restored = ckpt::restore(ck, views);
  CHECK(restored.optimizer().step_count() == 0);
  // Restored weights match a fresh trainer with the same seed.
  model::Trainer fresh(views, toy_config());
  auto a = restored.named_parameters();
  auto b = fresh.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(bit_identical(a[i].second->value, b[i].second->value));
}

TEST_CASE("restore validates the data against the config echo") {
  TempDir tmp;
  auto views = toy_views();
  model::Trainer trainer(views, toy_config());
  trainer.train_epoch();
  const fs::path p = tmp.path / "t.gbck";
  ckpt::save(p, trainer);
  auto ck = ckpt::load(p);

  SUBCASE("wrong view count") {
    CHECK_THROWS_AS(ckpt::restore(ck, {views[0]}), gbcc::data_error);
  }
  SUBCASE("wrong feature dimension") {
    std::vector<Matrix> wrong = {views[0], Matrix::zeros(views[1].rows, 9)};
    CHECK_THROWS_WITH_AS(ckpt::restore(ck, wrong),
                         doctest::Contains("dimension"), gbcc::data_error);
  }
}

TEST_CASE("corrupt checkpoint files are rejected") {
  TempDir tmp;
  auto views = toy_views();
  model::Trainer trainer(views, toy_config());
  trainer.train_epoch();
  const fs::path p = tmp.path / "t.gbck";
  ckpt::save(p, trainer);

  SUBCASE("bad magic") {
    std::ifstream in(p, std::ios::binary);
    std::string bytes(std::istreambuf_iterator<char>(in), {});
    bytes[0] = 'X';
    std::ofstream(tmp.path / "bad.gbck", std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_AS(ckpt::load(tmp.path / "bad.gbck"), gbcc::data_error);
  }

  SUBCASE("truncated tail") {
    std::ifstream in(p, std::ios::binary);
    std::string bytes(std::istreambuf_iterator<char>(in), {});
    bytes.resize(bytes.size() - 17);
    std::ofstream(tmp.path / "cut.gbck", std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_AS(ckpt::load(tmp.path / "cut.gbck"), gbcc::data_error);
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(ckpt::load(tmp.path / "absent.gbck"), gbcc::data_error);
  }
}
