/*
 * Copyright 2026 The twintrigger Authors
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "twintrigger/pipeline.hpp"

using namespace twintrigger;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("twintrigger-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the installed binary with the given arguments, capturing both
// streams. The shell string stays simple: callers pass no quotes.
RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / "twintrigger-cli-io";
  fs::create_directories(dir);
  const fs::path out = dir / ("out-" + std::to_string(counter));
  const fs::path err = dir / ("err-" + std::to_string(counter));
  ++counter;
  const std::string cmd = std::string(TWINTRIGGER_BIN) + " " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// Small scenes keep gen-data and downstream stages fast.
std::string tiny_flags(const fs::path& root) {
  return " --out " + root.string() +
         " --set dataset.num_images=8 --set dataset.width=48"
         " --set dataset.height=48";
}

}  // namespace

TEST_CASE("version flag exits clean") {
  const RunResult r = run_cli("--version");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("0.1.0") != std::string::npos);
}

TEST_CASE("a bare invocation is a usage error with a JSON line") {
  const RunResult r = run_cli("");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("\"error\":\"usage\"") != std::string::npos);
}

TEST_CASE("unknown config keys die before any work") {
  const fs::path root = fresh_dir("cli-badset");
  const RunResult r =
      run_cli("gen-data --out " + root.string() + " --set dataset.wibble=1");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("\"error\":\"config\"") != std::string::npos);
  CHECK_FALSE(fs::exists(root / "data"));
}

TEST_CASE("invalid evaluate variant is rejected by the parser") {
  const RunResult r = run_cli("evaluate --variant Huh-Tri");
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("\"error\":\"usage\"") != std::string::npos);
}

TEST_CASE("gen-data writes the dataset, provenance, and config snapshot") {
  const fs::path root = fresh_dir("cli-gen");
  const RunResult r = run_cli("gen-data --seed 7" + tiny_flags(root));
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("ok stage=gen-data") != std::string::npos);
  CHECK(fs::exists(root / "data" / "manifest.jsonl"));
  CHECK(fs::exists(root / "data" / "train_manifest.jsonl"));
  CHECK(fs::exists(root / "data" / "val_manifest.jsonl"));
  CHECK(fs::exists(root / "data" / "provenance.json"));
  CHECK(fs::exists(root / "config.ini"));
  CHECK_FALSE(fs::exists(root / ".lock"));  // released on exit

  // The --n flag overrides the config's image count.
  const fs::path root2 = fresh_dir("cli-gen-n");
  const RunResult r2 = run_cli("gen-data --seed 7 --n 4" + tiny_flags(root2));
  CHECK(r2.exit_code == 0);
  int pngs = 0;
  for (const auto& e : fs::directory_iterator(root2 / "data" / "images"))
    pngs += e.path().extension() == ".png";
  CHECK(pngs == 4);
}

TEST_CASE("gen-data is deterministic in the seed") {
  const fs::path a = fresh_dir("cli-det-a");
  const fs::path b = fresh_dir("cli-det-b");
  const fs::path c = fresh_dir("cli-det-c");
  REQUIRE(run_cli("gen-data --seed 5" + tiny_flags(a)).exit_code == 0);
  REQUIRE(run_cli("gen-data --seed 5" + tiny_flags(b)).exit_code == 0);
  REQUIRE(run_cli("gen-data --seed 6" + tiny_flags(c)).exit_code == 0);
  CHECK(tree_checksum(a / "data" / "images") ==
        tree_checksum(b / "data" / "images"));
  CHECK(tree_checksum(a / "data" / "images") !=
        tree_checksum(c / "data" / "images"));
}

TEST_CASE("the env var supplies the output root when no flag is given") {
  const fs::path root = fresh_dir("cli-env");
  setenv(kOutEnvVar, root.string().c_str(), 1);
  const RunResult r = run_cli(
      "gen-data --seed 3 --set dataset.num_images=4"
      " --set dataset.width=48 --set dataset.height=48");
  unsetenv(kOutEnvVar);
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(root / "data" / "manifest.jsonl"));
}

TEST_CASE("a held lock turns invocations away unless forced") {
  const fs::path root = fresh_dir("cli-lock");
  fs::create_directories(root);
  std::ofstream(root / ".lock") << "424242\n";

  const RunResult blocked = run_cli("gen-data --seed 2" + tiny_flags(root));
  CHECK(blocked.exit_code == 1);
  CHECK(blocked.err.find("\"error\":\"locked\"") != std::string::npos);

  const RunResult forced =
      run_cli("gen-data --seed 2 --force" + tiny_flags(root));
  CHECK(forced.exit_code == 0);
  CHECK_FALSE(fs::exists(root / ".lock"));
}

TEST_CASE("downstream stages refuse missing upstream artifacts") {
  const fs::path root = fresh_dir("cli-missing");
  const RunResult r =
      run_cli("poison --rho 0.2" + tiny_flags(root));
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("\"error\":\"missing-artifact\"") != std::string::npos);
}

TEST_CASE("tampered artifacts are refused until forced") {
  const fs::path root = fresh_dir("cli-stale");
  REQUIRE(run_cli("gen-data --seed 9" + tiny_flags(root)).exit_code == 0);

  // Corrupt one training image behind the manifest's back.
  fs::path victim;
  for (const auto& e : fs::directory_iterator(root / "data" / "images")) {
    victim = e.path();
    break;
  }
  REQUIRE_FALSE(victim.empty());
  std::ofstream(victim, std::ios::app) << "junk";

  const std::string clf = "train-classifier --set classifier.epochs=1" +
                          tiny_flags(root);
  const RunResult stale = run_cli(clf);
  CHECK(stale.exit_code == 1);
  CHECK(stale.err.find("\"error\":\"stale-input\"") != std::string::npos);

  const RunResult forced = run_cli(clf + " --force");
  CHECK(forced.exit_code == 0);
  CHECK(forced.out.find("ok stage=train-classifier") != std::string::npos);
}
