#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "lbsf/model.hpp"
#include "lbsf/synthetic.hpp"
#include "lbsf/training.hpp"

namespace lbsf {

struct EvalConfig {
    double recall_fraction = 0.10;
    std::size_t top_k_merchants = 3;
    double validation_fraction = 0.1; // held out of the train file for per-epoch AUC
    std::vector<std::size_t> bench_t_values{128, 256, 512, 1024, 2048};
    std::size_t bench_merchants = 64;
    std::size_t bench_trials = 5;
};

// Merged view of every module's settings.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;
    SynthesisConfig synth;

    void validate() const;
    nlohmann::json to_json() const;
};

// key = value lines grouped under [section] headers, or written as
// section.key = value. '#' starts a comment. Values: integers, reals,
// true/false, quoted strings, or [a, b, ...] integer lists. Unknown keys and
// malformed lines throw ConfigError naming the line.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);

// Applies one "section.key" = "value" override with the same rules.
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

} // namespace lbsf
