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
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "twintrigger/config.hpp"
#include "twintrigger/metrics.hpp"

namespace twintrigger {

inline constexpr const char* kOutEnvVar = "TWINTRIGGER_OUT";

// Typed failure surfaced on the CLI's machine-readable error line.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

// Fixed-width tag so directory names sort and round-trip: "rho-0.200".
std::string rho_tag(double rho);
std::string detector_model_name(double rho, const std::string& variant);
// Inverse of detector_model_name for victim models.
bool parse_victim_name(const std::string& model, std::string* variant,
                       double* rho);

// Chained FNV-1a over sorted relative paths and file contents.
std::uint64_t tree_checksum(const std::filesystem::path& dir);

// Output root resolution: explicit flag > TWINTRIGGER_OUT > config value.
std::filesystem::path resolve_out_root(const std::string& flag_value,
                                       const PipelineConfig& cfg);

// A pipeline output directory plus the effective config. Stages verify
// their inputs against upstream provenance before running and record
// their own outputs after.
class Workspace {
 public:
  Workspace(std::filesystem::path root, PipelineConfig cfg,
            bool force = false);

  const std::filesystem::path& root() const { return root_; }
  const PipelineConfig& config() const { return cfg_; }
  PipelineConfig& config() { return cfg_; }
  bool force() const { return force_; }

  std::filesystem::path path(const std::string& rel) const;
  // Same, creating the directory.
  std::filesystem::path dir(const std::string& rel) const;

  // Persist the merged effective config snapshot at root/config.ini.
  void persist_config() const;

  // Write stage_dir/provenance.json: config checksum, seed, wall clock,
  // input and output checksums (directories get tree checksums).
  void record_stage(const std::string& stage, const std::string& stage_dir,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) const;

  // Each input must exist and match the checksum its producing stage
  // recorded; violations throw PipelineError unless force is set.
  void require_inputs(const std::vector<std::string>& inputs) const;

 private:
  std::filesystem::path root_;
  PipelineConfig cfg_;
  bool force_;
};

struct StageResult {
  std::string stage;
  std::map<std::string, std::string> summary;
};

StageResult run_gen_data(Workspace& ws);
StageResult run_ingest_data(Workspace& ws);
// Trains both configured architectures on the balanced artifact corpus.
StageResult run_train_classifier(Workspace& ws);
// variant: combined | mse | bce (loss-term ablation).
StageResult run_train_tgn1(Workspace& ws, const std::string& variant);
StageResult run_poison(Workspace& ws, double rho, const std::string& variant);
// rho == 0 trains the normal model on the clean manifest.
StageResult run_train_detector(Workspace& ws, double rho,
                               const std::string& variant);
StageResult run_train_tgn2(Workspace& ws, double victim_rho,
                           const std::string& variant);
// tri: N-Tri | Inv-Tri | Vis-Tri; variant picks the invisible trigger.
StageResult run_evaluate(Workspace& ws, const std::string& model,
                         const std::string& tri, const std::string& variant);
StageResult run_shapley(Workspace& ws, double victim_rho,
                        const std::string& variant);
StageResult run_report(Workspace& ws);

void save_eval_report(const std::filesystem::path& path, const EvalReport& r);
EvalReport load_eval_report(const std::filesystem::path& path);

// Exclusive lock on an output root (root/.lock); force steals an
// existing lock. Released on destruction.
class LockGuard {
 public:
  LockGuard(const std::filesystem::path& root, bool force);
  ~LockGuard();
  LockGuard(const LockGuard&) = delete;
  LockGuard& operator=(const LockGuard&) = delete;

 private:
  std::filesystem::path path_;
  bool owned_ = false;
};

}  // namespace twintrigger
