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
#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "twintrigger/config.hpp"
#include "twintrigger/pipeline.hpp"

namespace {

using twintrigger::PipelineConfig;
using twintrigger::PipelineError;
using twintrigger::StageResult;
using twintrigger::Workspace;

struct CommonArgs {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  bool force = false;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "Sectioned key=value config file")
      ->check(CLI::ExistingFile);
  cmd->add_option_function<std::uint64_t>(
      "--seed",
      [&a](std::uint64_t v) {
        a.seed = v;
        a.seed_set = true;
      },
      "Override the global seed");
  cmd->add_option("--out", a.out,
                  "Output root (beats TWINTRIGGER_OUT and the config)");
  cmd->add_flag("--force", a.force,
                "Steal a stale lock and skip upstream checksum checks");
  cmd->add_option("--set", a.overrides,
                  "section.key=value config override, repeatable");
}

// Single machine-readable line on stderr; the exit code signals failure.
void emit_error(const std::string& code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump()
            << std::endl;
}

void print_result(const StageResult& r) {
  std::cout << "ok stage=" << r.stage;
  for (const auto& [k, v] : r.summary) std::cout << " " << k << "=" << v;
  std::cout << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Twin-trigger backdoor pipeline for object detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");

  CommonArgs common;
  int gen_n = 0;
  std::string variant = "combined";
  double rho = 0.0;
  std::string model = "normal";
  std::string tri = "N-Tri";
  std::string trigger_variant = "combined";

  CLI::App* c_gen = app.add_subcommand("gen-data", "Render the synthetic set");
  add_common(c_gen, common);
  c_gen->add_option("--n", gen_n, "Image count (overrides the config)")
      ->check(CLI::PositiveNumber);

  CLI::App* c_ingest =
      app.add_subcommand("ingest-data", "Convert a COCO-style dataset");
  add_common(c_ingest, common);

  CLI::App* c_clf = app.add_subcommand("train-classifier",
                                       "Train the artifact classifiers");
  add_common(c_clf, common);

  CLI::App* c_t1 =
      app.add_subcommand("train-tgn1", "Train the invisible trigger network");
  add_common(c_t1, common);
  c_t1->add_option("--variant", variant, "Loss ablation: combined, mse, bce")
      ->check(CLI::IsMember({"combined", "mse", "bce"}));

  CLI::App* c_poison =
      app.add_subcommand("poison", "Embed the invisible trigger in a subset");
  add_common(c_poison, common);
  c_poison->add_option("--rho", rho, "Poisoning rate in (0, 1]")->required();
  c_poison->add_option("--variant", variant, "Invisible trigger variant");

  CLI::App* c_det =
      app.add_subcommand("train-detector", "Train a detector model");
  add_common(c_det, common);
  c_det->add_option("--rho", rho, "0 trains the normal model on clean data");
  c_det->add_option("--variant", variant, "Invisible trigger variant");

  CLI::App* c_t2 =
      app.add_subcommand("train-tgn2", "Train the visible trigger network");
  add_common(c_t2, common);
  c_t2->add_option("--rho", rho, "Victim model poisoning rate")->required();
  c_t2->add_option("--variant", variant, "Victim's invisible trigger variant");

  CLI::App* c_eval = app.add_subcommand("evaluate", "Score a detector");
  add_common(c_eval, common);
  c_eval->add_option("--model", model,
                     "Detector name: normal or victim-<variant>-rho-X.XXX");
  c_eval->add_option("--variant", tri, "Trigger at eval time")
      ->check(CLI::IsMember({"N-Tri", "Inv-Tri", "Vis-Tri"}));
  c_eval->add_option("--trigger", trigger_variant,
                     "Invisible trigger variant used for Inv-Tri");

  CLI::App* c_shap =
      app.add_subcommand("shapley", "Patch attribution on a victim model");
  add_common(c_shap, common);
  c_shap->add_option("--rho", rho, "Victim model poisoning rate")->required();
  c_shap->add_option("--variant", variant,
                     "Victim's invisible trigger variant");

  CLI::App* c_rep =
      app.add_subcommand("report", "Assemble degradation tables and curves");
  add_common(c_rep, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) emit_error("usage", e.what());
    return code == 0 ? 0 : 2;
  }

  PipelineConfig cfg;
  try {
    if (!common.config.empty()) cfg = twintrigger::load_config(common.config);
    for (const std::string& assignment : common.overrides)
      twintrigger::apply_override(cfg, assignment);
    if (common.seed_set) cfg.seed = common.seed;
    if (c_gen->parsed() && gen_n > 0) cfg.dataset.num_images = gen_n;
    twintrigger::validate_config(cfg);
  } catch (const std::exception& e) {
    emit_error("config", e.what());
    return 2;
  }

  try {
    const std::filesystem::path root =
        twintrigger::resolve_out_root(common.out, cfg);
    twintrigger::LockGuard lock(root, common.force);
    Workspace ws(root, cfg, common.force);
    StageResult r{"", {}};
    if (c_gen->parsed())
      r = twintrigger::run_gen_data(ws);
    else if (c_ingest->parsed())
      r = twintrigger::run_ingest_data(ws);
    else if (c_clf->parsed())
      r = twintrigger::run_train_classifier(ws);
    else if (c_t1->parsed())
      r = twintrigger::run_train_tgn1(ws, variant);
    else if (c_poison->parsed())
      r = twintrigger::run_poison(ws, rho, variant);
    else if (c_det->parsed())
      r = twintrigger::run_train_detector(ws, rho, variant);
    else if (c_t2->parsed())
      r = twintrigger::run_train_tgn2(ws, rho, variant);
    else if (c_eval->parsed())
      r = twintrigger::run_evaluate(ws, model, tri, trigger_variant);
    else if (c_shap->parsed())
      r = twintrigger::run_shapley(ws, rho, variant);
    else if (c_rep->parsed())
      r = twintrigger::run_report(ws);
    print_result(r);
  } catch (const PipelineError& e) {
    emit_error(e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return 1;
  }
  return 0;
}
