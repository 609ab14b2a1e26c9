#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lbsf/behavior_data.hpp"

namespace lbsf {

enum class MerchantTier { luxury, basic, transport, entertainment, finance };

struct MerchantArchetype {
    std::string name;
    MerchantTier tier;
    std::vector<std::string> descriptions;
};

// The fixed merchant catalog the generator draws from.
const std::vector<MerchantArchetype>& merchant_catalog();

struct PatternMix {
    double lifestyle_shift = 0.5; // luxury spend collapses, basic + consumer finance rise
    double impulsive_surge = 0.5; // super-linear weekly surge at one entertainment merchant
};

struct SynthesisConfig {
    std::size_t n_users = 2000;
    double positive_rate = 0.10;
    int t_span_days = 90;
    double mean_behaviors_per_day = 1.0;
    std::uint64_t seed = 7;
    PatternMix pattern_mix;
    int surge_peak_per_week = 11;
    // Fraction of negatives that are heavy but stationary users of a surge
    // merchant; they make the level alone ambiguous, only the trend tells.
    double decoy_rate = 0.25;

    // Throws ConfigError on an invalid combination.
    void validate() const;
};

enum class PlantedPattern { none, lifestyle_shift, impulsive_surge };

struct PlantedTruth {
    std::string user_id;
    PlantedPattern pattern = PlantedPattern::none;
    std::string surge_merchant;   // set for impulsive_surge positives and decoys
    std::int64_t onset_ts = 0;    // drift onset, may precede the window
};

struct SyntheticData {
    Dataset dataset;
    std::vector<PlantedTruth> truth; // parallel to dataset.records
};

// Pure function of the config. Throws EmptyDatasetError for n_users == 0.
Dataset generate_synthetic(const SynthesisConfig& cfg);
SyntheticData generate_synthetic_with_truth(const SynthesisConfig& cfg);

// Last instant (exclusive) of every generated observation window.
inline constexpr std::int64_t kWindowEnd = 1719792000; // 2024-07-01T00:00:00Z

} // namespace lbsf
