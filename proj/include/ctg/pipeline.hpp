#pragma once
// Command orchestration: configuration resolution and the seven pipeline
// commands.  Every command writes a resolved-config echo next to its outputs
// and uses atomic writes throughout.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ctg/model.hpp"
#include "ctg/types.hpp"

namespace ctg {

struct RunConfig {
    std::uint64_t seed = 1;
    int threads = 0;  // 0 = hardware concurrency
    SynthConfig synth;
    ModelConfig model;
    double val_fraction = 1.0 / 6.0;
    double test_fraction = 1.0 / 6.0;
    int bootstrap_b = 1000;
    int components = 4;      // PCA/ICA components and traversal dimensions
    int traverse_steps = 9;
    std::vector<double> sweep_targets = {3.0, 20.0, 50.0, 200.0};
    std::vector<std::uint64_t> sweep_seeds = {1, 2};

    std::map<std::string, std::string> resolved;   // full echo, key -> value
    std::set<std::string> explicit_keys;           // keys the user actually set
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Loads `config_path` (may be empty for all-defaults), applies CLI overrides,
// validates every key, and rejects unknown ones.
RunConfig load_run_config(const std::string& config_path, const Overrides& overrides);

void cmd_synth(const RunConfig& run, const std::string& out_dir);
void cmd_preprocess(const RunConfig& run, const std::string& corpus_path,
                    const std::string& out_dir);
void cmd_features(const RunConfig& run, const std::string& data_dir,
                  const std::string& out_dir);
void cmd_train(const RunConfig& run, const std::string& data_dir,
               const std::string& out_dir);
void cmd_eval(const RunConfig& run, const std::string& checkpoint_path,
              const std::string& data_dir, const std::string& out_dir,
              const std::string& corpus_path = "", const std::string& trace_ctg = "");
void cmd_tc_sweep(const RunConfig& run, const std::string& data_dir,
                  const std::string& out_dir);
void cmd_interpret(const RunConfig& run, const std::string& checkpoint_path,
                   const std::string& data_dir, const std::string& out_dir);

}  // namespace ctg
