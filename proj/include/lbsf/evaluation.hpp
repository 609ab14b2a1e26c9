#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lbsf/behavior_data.hpp"
#include "lbsf/model.hpp"

namespace lbsf {

// Mann-Whitney AUC; ties between a positive and a negative count 0.5.
// Throws UndefinedMetricError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

// Positives among the top ceil(frac * N) scores over all positives. Ties in
// score keep input order. Throws UndefinedMetricError without positives.
double recall_at_fraction(std::span<const double> scores, std::span<const int> labels, double frac = 0.10);

struct ScoredUser {
    std::string user_id;
    std::optional<double> probability; // empty when unscorable
    std::optional<int> label;
};

template <class Real>
std::vector<ScoredUser> score_dataset(const Dataset& data, const LbsfModel<Real>& model, std::size_t workers = 1);

struct EvalReport {
    std::optional<double> auc;             // empty unless both classes were scored
    std::optional<double> recall_at_10pct;
    double recall_fraction = 0.10;
    std::size_t n_scored = 0;
    std::size_t n_unscorable = 0;
    std::vector<ScoredUser> users;

    nlohmann::json to_json(bool include_users = false) const;
};

EvalReport make_report(std::vector<ScoredUser> users, double recall_fraction = 0.10);

template <class Real>
EvalReport evaluate(const Dataset& data, const LbsfModel<Real>& model, double recall_fraction = 0.10,
                    std::size_t workers = 1);

struct WeeklyCounts {
    std::string merchant;
    std::vector<std::size_t> counts; // 7-day bins from the user's first behavior
};

struct AttributionRecord {
    std::string user_id;
    std::vector<std::pair<std::string, double>> ranking; // head-averaged CLS attention, descending
    std::vector<WeeklyCounts> weekly;                     // for the top-k merchants of the ranking

    nlohmann::json to_json() const;
};

template <class Real>
AttributionRecord explain_user(const UserRecord& record, const LbsfModel<Real>& model, std::size_t top_k);

template <class Real>
std::vector<AttributionRecord> export_attributions(const Dataset& data, const LbsfModel<Real>& model,
                                                   std::size_t top_k, std::size_t workers = 1);

struct BenchConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t ffn_hidden = 256;
    std::uint64_t seed = 0;
};

struct BenchRow {
    std::size_t T = 0;
    std::uint64_t flat_cells = 0;
    std::uint64_t folded_cells = 0;
    double flat_ms = 0.0;
    double folded_ms = 0.0;
};

// One synthetic user per T with T behaviors spread evenly over M merchants,
// scored by a folded and a flat model of matching width. Cell counts come
// from the attention counters of the actual forward passes; times are the
// median over `trials`.
std::vector<BenchRow> bench_fold_vs_flat(const std::vector<std::size_t>& t_values, std::size_t merchants,
                                         std::size_t trials, const BenchConfig& cfg = {});

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

} // namespace lbsf
