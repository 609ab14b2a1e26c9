#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "lbsf/error.hpp"
#include "lbsf/evaluation.hpp"
#include "lbsf/training.hpp"

using namespace lbsf;

namespace {

// Pairwise definition, O(N^2).
double auc_pairs(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0;
    double pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1;
                wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
        }
    }
    return wins / pairs;
}

// Positives among the first ceil(n/10) items of a stable descending order, counted directly.
double recall_top_tenth(const std::vector<double>& s, const std::vector<int>& y) {
    const std::size_t n = s.size();
    const std::size_t k = (n + 9) / 10; // exact ceiling of n / 10
    double hit = 0, pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t ahead = 0;
        for (std::size_t j = 0; j < n; ++j) {
            ahead += s[j] > s[i] || (s[j] == s[i] && j < i);
        }
        pos += y[i];
        hit += (y[i] == 1 && ahead < k) ? 1 : 0;
    }
    return hit / pos;
}

} // namespace

TEST(Auc, Examples) {
    EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
    EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.9, 0.8, 0.3, 0.1}, std::vector<int>{1, 0, 1, 0}), 0.75);
    EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.4, 0.4, 0.4}, std::vector<int>{1, 0, 0}), 0.5);
    EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}), 0.0);
    EXPECT_THROW(auc(std::vector<double>{0.2, 0.3}, std::vector<int>{1, 1}), UndefinedMetricError);
    EXPECT_THROW(auc(std::vector<double>{}, std::vector<int>{}), UndefinedMetricError);
}

TEST(Recall, Examples) {
    std::vector<double> s(20);
    std::vector<int> y(20, 0);
    for (std::size_t i = 0; i < 20; ++i) {
        s[i] = 1.0 - 0.01 * static_cast<double>(i);
    }
    y[1] = y[5] = y[15] = 1; // top 2 holds one of three positives
    EXPECT_DOUBLE_EQ(recall_at_fraction(s, y), 1.0 / 3.0);

    std::vector<double> s10(s.begin(), s.begin() + 10);
    std::vector<int> y10(10, 0);
    y10[0] = y10[3] = 1; // k = 1
    EXPECT_DOUBLE_EQ(recall_at_fraction(s10, y10), 0.5);

    EXPECT_THROW(recall_at_fraction(s10, std::vector<int>(10, 0)), UndefinedMetricError);

    // 0.1 * 30 rounds above 3 in binary; k must still be 3.
    std::vector<double> s30(30);
    std::vector<int> y30(30, 0);
    for (std::size_t i = 0; i < 30; ++i) {
        s30[i] = 30.0 - static_cast<double>(i);
    }
    y30[3] = y30[10] = 1;
    EXPECT_DOUBLE_EQ(recall_at_fraction(s30, y30), 0.0);
}

TEST(Metrics, MatchPairwiseOraclesWithTies) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 500)(rng);
        std::vector<double> s(n);
        std::vector<int> y(n);
        std::uniform_int_distribution<int> coarse(0, 20);
        std::bernoulli_distribution pos(0.3);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = trial % 2 ? coarse(rng) / 20.0 : std::uniform_real_distribution<double>(0, 1)(rng);
            y[i] = pos(rng);
        }
        y[0] = 1;
        y[1] = 0;
        ASSERT_NEAR(auc(s, y), auc_pairs(s, y), 1e-12) << "trial " << trial;
        ASSERT_NEAR(recall_at_fraction(s, y), recall_top_tenth(s, y), 1e-12) << "trial " << trial;
    }
}

TEST(Metrics, InvariantUnderMonotoneTransforms) {
    std::mt19937_64 rng(22);
    std::normal_distribution<double> n(0, 1);
    std::vector<double> s(300), e(300), a(300);
    std::vector<int> y(300);
    for (std::size_t i = 0; i < 300; ++i) {
        s[i] = n(rng);
        e[i] = std::exp(s[i]);
        a[i] = 3.0 * s[i] + 7.0;
        y[i] = i % 3 == 0;
    }
    EXPECT_DOUBLE_EQ(auc(s, y), auc(e, y));
    EXPECT_DOUBLE_EQ(auc(s, y), auc(a, y));
    EXPECT_DOUBLE_EQ(recall_at_fraction(s, y), recall_at_fraction(e, y));
}

TEST(Report, CountsAndJson) {
    std::vector<ScoredUser> users{{"a", 0.9, 1}, {"b", 0.1, 0}, {"c", std::nullopt, 1}};
    const auto r = make_report(users);
    EXPECT_EQ(r.n_scored, 2u);
    EXPECT_EQ(r.n_unscorable, 1u);
    EXPECT_DOUBLE_EQ(*r.auc, 1.0);
    const auto j = r.to_json(true);
    EXPECT_EQ(j.at("users").size(), 3u);

    const auto one_class = make_report({{"a", 0.9, 1}});
    EXPECT_FALSE(one_class.auc.has_value());
}

TEST(Attribution, WeightsAndWeeklyCounts) {
    const auto data = fixtures::small_synthetic(20, 31);
    LbsfModel<float> m(fixtures::tiny_config(6, 8), 31);
    fit_model_statistics(m, data);
    for (const auto& r : data.records) {
        const auto rec = explain_user(r, m, 6);
        ASSERT_FALSE(rec.ranking.empty());
        double sum = 0;
        for (std::size_t i = 0; i < rec.ranking.size(); ++i) {
            sum += rec.ranking[i].second;
            if (i > 0) {
                EXPECT_GE(rec.ranking[i - 1].second, rec.ranking[i].second);
            }
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);

        const auto folded = fold_sequence(r, m.config().fold);
        std::size_t retained = 0;
        for (std::size_t j = 0; j < folded.slots.size(); ++j) {
            if (folded.merchant_mask[j]) {
                retained += folded.slots[j].behaviors.size();
            }
        }
        std::size_t counted = 0;
        for (const auto& w : rec.weekly) {
            counted += std::accumulate(w.counts.begin(), w.counts.end(), std::size_t{0});
        }
        EXPECT_EQ(rec.weekly.size(), rec.ranking.size());
        EXPECT_EQ(counted, retained);
    }
}

TEST(Attribution, UnscorableUserHasEmptyRanking) {
    LbsfModel<float> m(fixtures::tiny_config(), 1);
    UserRecord empty;
    empty.user_id = "nobody";
    const auto rec = explain_user(empty, m, 3);
    EXPECT_TRUE(rec.ranking.empty());
    EXPECT_TRUE(rec.weekly.empty());
    EXPECT_EQ(rec.to_json().at("user_id"), "nobody");
}

TEST(Evaluate, ScoresWholeDataset) {
    const auto data = fixtures::small_synthetic(40, 32);
    LbsfModel<float> m(fixtures::tiny_config(), 32);
    fit_model_statistics(m, data);
    const auto r = evaluate(data, m);
    EXPECT_EQ(r.n_scored + r.n_unscorable, data.size());
    ASSERT_TRUE(r.auc.has_value());
    EXPECT_GE(*r.auc, 0.0);
    EXPECT_LE(*r.auc, 1.0);
    const auto r2 = evaluate(data, m, 0.10, 2);
    EXPECT_EQ(r2.auc, r.auc);
}

TEST(Bench, CellCountsAtLargeT) {
    const auto rows = bench_fold_vs_flat({64, 1024}, 64, 1);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1].flat_cells, 1048576u);
    EXPECT_EQ(rows[1].folded_cells, 24705u); // 64 * 16^2 + 64^2 + 65^2
    EXPECT_EQ(rows[0].flat_cells, 4096u);
    std::ostringstream csv;
    write_bench_csv(csv, rows);
    EXPECT_EQ(csv.str().substr(0, 2), "T,");
}
