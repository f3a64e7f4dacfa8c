/*
 * Copyright 2026 PISE Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <pise/config.hpp>
#include <pise/manifest.hpp>

using namespace pise;
namespace fs = std::filesystem;

namespace {

ConfigMap minimal_map() {
  return {
      {"dataset", "fashion_mnist"}, {"rate", "0.05"},
      {"pattern", "gaussian"},      {"operator_seed", "7"},
      {"init_mode", "adjoint"},     {"epochs", "15"},
      {"param_seed", "1"},          {"noise_seed", "2"},
      {"output_dir", "runs/demo"},
  };
}

}  // namespace

TEST_CASE("config text parses keys, comments, and whitespace", "[config]") {
  const std::string text =
      "# experiment setup\n"
      "dataset = fashion_mnist\n"
      "\n"
      "rate=0.05   # five percent sampling\n"
      "  epochs =  15\n";
  ConfigMap map = parse_config_text(text);
  REQUIRE(map.size() == 3);
  CHECK(map.at("dataset") == "fashion_mnist");
  CHECK(map.at("rate") == "0.05");
  CHECK(map.at("epochs") == "15");

  CHECK_THROWS_AS(parse_config_text("novalue\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_config_text("= 3\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_config_text("a = 1\na = 2\n"), InvalidArgument);
}

TEST_CASE("config serialization is a parse fixed point", "[config]") {
  ConfigMap map = minimal_map();
  const std::string text = serialize_config(map);
  ConfigMap back = parse_config_text(text);
  CHECK(back == map);
  // Second round adds nothing.
  CHECK(parse_config_text(serialize_config(back)) == back);
}

TEST_CASE("train config resolves defaults and validates", "[config]") {
  TrainConfig cfg = train_config_from_map(minimal_map());
  CHECK(cfg.dataset == "fashion_mnist");
  CHECK(cfg.rate == 0.05);
  CHECK(cfg.pattern == PatternKind::gaussian);
  CHECK(cfg.init_mode == InitMode::adjoint);
  CHECK(cfg.epochs == 15);
  CHECK(cfg.operator_seed == 7);
  CHECK(cfg.param_seed == 1);
  CHECK(cfg.noise_seed == 2);
  // Documented defaults.
  CHECK(cfg.train_count == 4000);
  CHECK(cfg.val_count == 512);
  CHECK(cfg.test_count == 1000);
  CHECK(cfg.loss.mse == 1.0);
  CHECK(cfg.loss.perc == 0.05);
  CHECK(cfg.extractor == "domain_cnn");
  CHECK(cfg.optimizer == "adam");
  CHECK(cfg.learning_rate == 1e-3);
  CHECK(cfg.batch_size == 64);
  CHECK(cfg.train_sigma_max == 0.1);
  CHECK(cfg.eval_noise == "poisson");
  CHECK(cfg.eval_photon_scale == 1e4);
  CHECK(cfg.eval_quant_bits == 8);
  CHECK(cfg.unet_depth == 3);
  CHECK(cfg.unet_base == 32);
}

TEST_CASE("missing required keys are enumerated by name", "[config]") {
  ConfigMap map = minimal_map();
  map.erase("rate");
  map.erase("param_seed");
  map.erase("output_dir");
  try {
    train_config_from_map(map);
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("rate") != std::string::npos);
    CHECK(msg.find("param_seed") != std::string::npos);
    CHECK(msg.find("output_dir") != std::string::npos);
    CHECK(msg.find("missing config keys") != std::string::npos);
  }
}

TEST_CASE("unknown and invalid config values are rejected", "[config]") {
  {
    ConfigMap map = minimal_map();
    map["ratee"] = "0.1";  // typo must not silently default
    try {
      train_config_from_map(map);
      FAIL("expected an error");
    } catch (const InvalidArgument& e) {
      CHECK(std::string(e.what()).find("ratee") != std::string::npos);
    }
  }
  {
    ConfigMap map = minimal_map();
    map["epochs"] = "5";  // below the grad-index window + 1
    CHECK_THROWS_AS(train_config_from_map(map), InvalidArgument);
  }
  {
    ConfigMap map = minimal_map();
    map["rate"] = "1.5";
    CHECK_THROWS_AS(train_config_from_map(map), InvalidArgument);
  }
  {
    ConfigMap map = minimal_map();
    map["pattern"] = "plaid";
    CHECK_THROWS_AS(train_config_from_map(map), InvalidArgument);
  }
  {
    ConfigMap map = minimal_map();
    map["optimizer"] = "sgd";
    CHECK_THROWS_AS(train_config_from_map(map), InvalidArgument);
  }
  {
    ConfigMap map = minimal_map();
    map["epochs"] = "15x";
    CHECK_THROWS_AS(train_config_from_map(map), InvalidArgument);
  }
}

TEST_CASE("resolved configs round-trip through text exactly", "[config]") {
  ConfigMap sparse = minimal_map();
  sparse["lambda_perc"] = "0.25";
  sparse["unet_depth"] = "2";
  TrainConfig cfg = train_config_from_map(sparse);
  ConfigMap full = train_config_to_map(cfg);

  // parse(serialize(m)) == m on the fully resolved map.
  CHECK(parse_config_text(serialize_config(full)) == full);

  // And re-resolving yields the same resolved map (fixed point).
  TrainConfig cfg2 = train_config_from_map(full);
  CHECK(train_config_to_map(cfg2) == full);
  CHECK(cfg2.loss.perc == 0.25);
  CHECK(cfg2.unet_depth == 2);
}

TEST_CASE("config files save and load through disk", "[config]") {
  fs::path dir = fs::temp_directory_path() / "pise_cfg_test";
  fs::create_directories(dir);
  const std::string path = (dir / "run.cfg").string();
  ConfigMap map = train_config_to_map(train_config_from_map(minimal_map()));
  save_config_file(map, path);
  CHECK(load_config_file(path) == map);
  CHECK_THROWS_AS(load_config_file((dir / "absent.cfg").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("manifests record a run and finalize in place", "[config]") {
  fs::path dir = fs::temp_directory_path() / "pise_man_test";
  fs::create_directories(dir);
  const std::string path = (dir / "manifest.json").string();

  ConfigMap cfgmap = train_config_to_map(train_config_from_map(minimal_map()));
  ExperimentManifest m = begin_manifest("train", cfgmap);
  m.inputs.push_back("cache/fashion_mnist");
  m.outputs.push_back("runs/demo/result.json");
  save_manifest(m, path);

  ExperimentManifest running = load_manifest(path);
  CHECK(running.command == "train");
  CHECK(running.status == "running");
  CHECK(running.config == cfgmap);
  CHECK_FALSE(running.started_at.empty());
  CHECK(running.finished_at.empty());
  CHECK(running.inputs == m.inputs);
  CHECK(running.outputs == m.outputs);

  finalize_manifest(m, true, path);
  ExperimentManifest done = load_manifest(path);
  CHECK(done.status == "complete");
  CHECK_FALSE(done.finished_at.empty());

  // The stored config is sufficient to rebuild the exact TrainConfig.
  TrainConfig rebuilt = train_config_from_map(done.config);
  CHECK(train_config_to_map(rebuilt) == cfgmap);

  finalize_manifest(m, false, path);
  CHECK(load_manifest(path).status == "failed");

  std::ofstream(path, std::ios::trunc) << "{ not json";
  CHECK_THROWS_AS(load_manifest(path), IoError);
  CHECK_THROWS_AS(load_manifest((dir / "none.json").string()), IoError);
  fs::remove_all(dir);
}
