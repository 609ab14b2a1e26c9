#include "lbsf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "lbsf/error.hpp"

namespace lbsf {

namespace {

constexpr std::int64_t kDay = 86400;

std::vector<MerchantArchetype> build_catalog() {
    using T = MerchantTier;
    return {
        {"Maison Lumiere Fine Dining", T::luxury, {"dinner", "tasting menu"}},
        {"Golden Crown Steakhouse", T::luxury, {"dinner", "private room"}},
        {"Azure Sky Airlines", T::luxury, {"flight ticket", "seat upgrade"}},
        {"Velvet Room Lounge", T::luxury, {"cocktails", "table reservation"}},
        {"Opal Jewelers", T::luxury, {"jewelry", "watch service"}},
        {"Regent Grand Hotel", T::luxury, {"hotel stay", "spa"}},
        {"Silk Road Boutique", T::luxury, {"designer clothing", "accessories"}},
        {"Harbor Yacht Club", T::luxury, {"membership fee", "charter"}},
        {"QuickStop Convenience", T::basic, {"quick meal", "snacks"}},
        {"Greenfield Market", T::basic, {"groceries", "vegetables"}},
        {"Daily Fresh Grocery", T::basic, {"groceries", "daily goods"}},
        {"MegaMart Online", T::basic, {"online order", "household items"}},
        {"Corner Bakery", T::basic, {"bread", "breakfast"}},
        {"Budget Noodle House", T::basic, {"quick meal", "lunch"}},
        {"Sunrise Pharmacy", T::basic, {"medicine", "daily goods"}},
        {"HomeNeeds Depot", T::basic, {"household items", "tools"}},
        {"Value Mart", T::basic, {"groceries", "online order"}},
        {"City Laundry", T::basic, {"laundry service"}},
        {"Metro Subway", T::transport, {"subway fare"}},
        {"City Bus", T::transport, {"bus fare"}},
        {"RideNow Taxi", T::transport, {"taxi ride"}},
        {"RailLink Train", T::transport, {"train ticket"}},
        {"ParkEasy Parking", T::transport, {"parking fee"}},
        {"FuelUp Station", T::transport, {"fuel"}},
        {"StarLive Streaming", T::entertainment, {"tip streamer", "gift for host"}},
        {"FoodDash Delivery", T::entertainment, {"meal order", "delivery fee"}},
        {"PixelQuest Games", T::entertainment, {"in-game purchase", "game credits"}},
        {"CineMax Theater", T::entertainment, {"movie ticket", "popcorn"}},
        {"BeatBox Music", T::entertainment, {"music subscription"}},
        {"LuckySpin Arcade", T::entertainment, {"game credits", "prize spin"}},
        {"VideoVerse", T::entertainment, {"video subscription", "movie rental"}},
        {"KaraokeKing", T::entertainment, {"room booking", "drinks"}},
        {"QuickCash Consumer Finance", T::finance, {"loan repayment", "installment"}},
        {"EasyPay Installments", T::finance, {"installment", "service fee"}},
        {"MicroLoan Express", T::finance, {"loan repayment", "interest"}},
        {"CreditBridge Lending", T::finance, {"loan repayment", "installment"}},
        {"CardPlus Repayment", T::finance, {"card repayment"}},
        {"InsureWell Insurance", T::finance, {"insurance premium"}},
    };
}

struct TierAmount {
    double log_mean;
    double log_sd;
};

TierAmount tier_amount(MerchantTier tier) {
    switch (tier) {
    case MerchantTier::luxury: return {std::log(280.0), 0.5};
    case MerchantTier::basic: return {std::log(22.0), 0.6};
    case MerchantTier::transport: return {std::log(6.0), 0.4};
    case MerchantTier::entertainment: return {std::log(14.0), 0.8};
    case MerchantTier::finance: return {std::log(180.0), 0.5};
    }
    return {0.0, 1.0};
}

std::vector<std::size_t> tier_members(MerchantTier tier) {
    std::vector<std::size_t> out;
    const auto& cat = merchant_catalog();
    for (std::size_t i = 0; i < cat.size(); ++i) {
        if (cat[i].tier == tier) {
            out.push_back(i);
        }
    }
    return out;
}

std::size_t catalog_index(const std::string& name) {
    const auto& cat = merchant_catalog();
    for (std::size_t i = 0; i < cat.size(); ++i) {
        if (cat[i].name == name) {
            return i;
        }
    }
    throw Error("unknown catalog merchant " + name);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Rate (events/day) interpolates linearly from `before` to `after` over
// `ramp_days` starting at `onset_day` (relative to the window start).
struct Stream {
    std::size_t merchant;
    double before;
    double after;
    double onset_day = 0.0;
    double ramp_days = 1.0;

    double rate(double day) const {
        const double t = std::clamp((day - onset_day) / ramp_days, 0.0, 1.0);
        return before + (after - before) * t;
    }
};

struct UserProfile {
    double activity;
    double peak_hour;
    double weekend_factor;
};

class UserSampler {
public:
    UserSampler(std::mt19937_64& rng, const UserProfile& profile, std::int64_t window_start, int span_days)
        : m_rng(rng), m_profile(profile), m_start(window_start), m_span(span_days) {}

    double day_factor(int day) const {
        // Window starts on a fixed weekday; day-of-week follows from the epoch.
        const std::int64_t days_since_epoch = (m_start / kDay) + day;
        const int dow = static_cast<int>((days_since_epoch + 4) % 7); // 0 = Sunday
        const double w = m_profile.weekend_factor;
        const double norm = (5.0 + 2.0 * w) / 7.0;
        return ((dow == 0 || dow == 6) ? w : 1.0) / norm;
    }

    std::int64_t draw_time(int day, bool late_night) {
        double hour;
        if (late_night) {
            hour = std::fmod(std::normal_distribution<double>(23.0, 1.5)(m_rng) + 48.0, 24.0);
        } else if (std::uniform_real_distribution<double>(0.0, 1.0)(m_rng) < 0.7) {
            hour = std::fmod(std::normal_distribution<double>(m_profile.peak_hour, 2.5)(m_rng) + 48.0, 24.0);
        } else {
            hour = std::uniform_real_distribution<double>(0.0, 24.0)(m_rng);
        }
        const auto seconds = static_cast<std::int64_t>(hour * 3600.0);
        return m_start + static_cast<std::int64_t>(day) * kDay + std::clamp<std::int64_t>(seconds, 0, kDay - 1);
    }

    PaymentBehavior draw(std::size_t merchant, int day, bool late_night = false) {
        const auto& arch = merchant_catalog()[merchant];
        PaymentBehavior b;
        b.merchant = arch.name;
        b.description = arch.descriptions[std::uniform_int_distribution<std::size_t>(0, arch.descriptions.size() - 1)(m_rng)];
        b.timestamp = draw_time(day, late_night);
        const auto amt = tier_amount(arch.tier);
        const double raw = std::lognormal_distribution<double>(amt.log_mean, amt.log_sd)(m_rng);
        b.amount = std::max(0.01, std::round(raw * 100.0) / 100.0);
        return b;
    }

    void emit_stream(const Stream& s, std::vector<PaymentBehavior>& out) {
        for (int day = 0; day < m_span; ++day) {
            const double lambda = s.rate(day + 0.5) * day_factor(day);
            if (lambda <= 0.0) {
                continue;
            }
            const int n = std::poisson_distribution<int>(lambda)(m_rng);
            for (int k = 0; k < n; ++k) {
                out.push_back(draw(s.merchant, day));
            }
        }
    }

    // Exactly counts[w] events in week w (7-day bins from the window start;
    // the final partial week squeezes its count into the remaining days).
    void emit_weekly(std::size_t merchant, const std::vector<int>& counts, std::vector<PaymentBehavior>& out) {
        for (std::size_t w = 0; w < counts.size(); ++w) {
            const int first = static_cast<int>(w) * 7;
            const int last = std::min(first + 7, m_span);
            for (int k = 0; k < counts[w]; ++k) {
                const int day = std::uniform_int_distribution<int>(first, last - 1)(m_rng);
                out.push_back(draw(merchant, day, true));
            }
        }
    }

private:
    std::mt19937_64& m_rng;
    UserProfile m_profile;
    std::int64_t m_start;
    int m_span;
};

const std::vector<std::string>& surge_candidates() {
    static const std::vector<std::string> names{"StarLive Streaming", "PixelQuest Games", "LuckySpin Arcade"};
    return names;
}

constexpr int kRampWeeks = 5;
constexpr int kMinDriftDays = kRampWeeks * 7;
constexpr int kMaxDriftDays = 120;

std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool, std::size_t k, std::mt19937_64& rng) {
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min(k, pool.size()));
    return pool;
}

UserRecord generate_user(const SynthesisConfig& cfg, std::size_t index, PlantedPattern pattern, PlantedTruth& truth) {
    std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(index + 1)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int span = cfg.t_span_days;
    const std::int64_t start = kWindowEnd - static_cast<std::int64_t>(span) * kDay;

    UserProfile profile{cfg.mean_behaviors_per_day * std::exp(std::normal_distribution<double>(0.0, 0.3)(rng)),
                        std::uniform_real_distribution<double>(8.0, 21.0)(rng),
                        std::uniform_real_distribution<double>(0.6, 1.6)(rng)};
    UserSampler sampler(rng, profile, start, span);

    // Merchant pool with relative preference weights.
    std::vector<std::size_t> pool;
    auto add = [&](MerchantTier tier, std::size_t k) {
        for (auto m : sample_without_replacement(tier_members(tier), k, rng)) {
            if (std::find(pool.begin(), pool.end(), m) == pool.end()) {
                pool.push_back(m);
            }
        }
    };
    add(MerchantTier::basic, std::uniform_int_distribution<std::size_t>(3, 5)(rng));
    add(MerchantTier::transport, std::uniform_int_distribution<std::size_t>(1, 2)(rng));
    add(MerchantTier::entertainment, std::uniform_int_distribution<std::size_t>(1, 3)(rng));
    add(MerchantTier::luxury, std::uniform_int_distribution<std::size_t>(0, 2)(rng));
    if (unit(rng) < 0.25) {
        add(MerchantTier::finance, 1);
    }

    std::vector<double> weights(pool.size());
    for (auto& w : weights) {
        w = std::exp(std::normal_distribution<double>(0.0, 0.7)(rng));
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);

    std::vector<Stream> streams;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const double r = profile.activity * weights[i] / total;
        streams.push_back({pool[i], r, r});
    }

    const int drift_days = std::uniform_int_distribution<int>(kMinDriftDays, kMaxDriftDays)(rng);
    const int onset_day = span - drift_days;
    truth.pattern = pattern;
    truth.onset_ts = start + static_cast<std::int64_t>(onset_day) * kDay;

    std::vector<PaymentBehavior> behaviors;
    const auto& cat = merchant_catalog();

    if (pattern == PlantedPattern::lifestyle_shift) {
        bool has_luxury = false;
        for (auto& s : streams) {
            s.onset_day = onset_day;
            s.ramp_days = 14.0;
            switch (cat[s.merchant].tier) {
            case MerchantTier::luxury:
                has_luxury = true;
                s.before = std::max(s.before, 0.35);
                s.after = s.before * 0.1;
                break;
            case MerchantTier::basic: s.after = s.before * 2.0; break;
            case MerchantTier::transport: s.after = s.before * 1.5; break;
            default: break;
            }
        }
        if (!has_luxury) {
            const auto lux = tier_members(MerchantTier::luxury);
            const auto m = lux[std::uniform_int_distribution<std::size_t>(0, lux.size() - 1)(rng)];
            streams.push_back({m, 0.35, 0.035, static_cast<double>(onset_day), 14.0});
        }
        auto upsert = [&](std::size_t m, double after) {
            for (auto& s : streams) {
                if (s.merchant == m) {
                    s.after = std::max(s.after, after);
                    return;
                }
            }
            streams.push_back({m, 0.0, after, static_cast<double>(onset_day), 14.0});
        };
        upsert(catalog_index("MegaMart Online"), 0.5);
        const auto fin = tier_members(MerchantTier::finance);
        upsert(fin[std::uniform_int_distribution<std::size_t>(0, 2)(rng)], 0.3);
    } else if (pattern == PlantedPattern::impulsive_surge) {
        const auto& names = surge_candidates();
        const auto surge = catalog_index(names[std::uniform_int_distribution<std::size_t>(0, names.size() - 1)(rng)]);
        truth.surge_merchant = cat[surge].name;
        streams.erase(std::remove_if(streams.begin(), streams.end(), [&](const Stream& s) { return s.merchant == surge; }),
                      streams.end());
        for (auto& s : streams) {
            if (cat[s.merchant].tier == MerchantTier::entertainment) {
                s.onset_day = onset_day;
                s.ramp_days = kRampWeeks * 7.0;
                s.after = s.before * 1.5;
            }
        }
        const int n_weeks = (span + 6) / 7;
        const int onset_week = onset_day >= 0 ? onset_day / 7 : -((-onset_day + 6) / 7);
        std::vector<int> counts(static_cast<std::size_t>(n_weeks), 0);
        for (int w = 0; w < n_weeks; ++w) {
            if (w < onset_week) {
                continue;
            }
            const double progress = std::min(1.0, static_cast<double>(w - onset_week + 1) / kRampWeeks);
            counts[static_cast<std::size_t>(w)] =
                static_cast<int>(std::lround(cfg.surge_peak_per_week * progress * progress));
        }
        sampler.emit_weekly(surge, counts, behaviors);
    } else if (unit(rng) < cfg.decoy_rate) {
        const auto& names = surge_candidates();
        const auto surge = catalog_index(names[std::uniform_int_distribution<std::size_t>(0, names.size() - 1)(rng)]);
        truth.surge_merchant = cat[surge].name;
        streams.erase(std::remove_if(streams.begin(), streams.end(), [&](const Stream& s) { return s.merchant == surge; }),
                      streams.end());
        const double weekly = cfg.surge_peak_per_week * std::uniform_real_distribution<double>(0.5, 1.0)(rng);
        const int n_weeks = (span + 6) / 7;
        std::vector<int> counts(static_cast<std::size_t>(n_weeks));
        for (auto& c : counts) {
            c = std::poisson_distribution<int>(weekly)(rng);
        }
        sampler.emit_weekly(surge, counts, behaviors);
    }

    for (const auto& s : streams) {
        sampler.emit_stream(s, behaviors);
    }
    sort_chronologically(behaviors);

    char id[32];
    std::snprintf(id, sizeof id, "u%06zu", index);
    UserRecord record;
    record.user_id = id;
    record.behaviors = std::move(behaviors);
    record.label = pattern == PlantedPattern::none ? 0 : 1;
    truth.user_id = record.user_id;
    return record;
}

} // namespace

const std::vector<MerchantArchetype>& merchant_catalog() {
    static const std::vector<MerchantArchetype> catalog = build_catalog();
    return catalog;
}

void SynthesisConfig::validate() const {
    if (!(positive_rate > 0.0 && positive_rate < 1.0)) {
        throw ConfigError("positive_rate must lie in (0, 1)");
    }
    if (t_span_days != 45 && t_span_days != 90 && t_span_days != 180) {
        throw ConfigError("t_span_days must be one of 45, 90, 180");
    }
    if (!(mean_behaviors_per_day > 0.0)) {
        throw ConfigError("mean_behaviors_per_day must be positive");
    }
    if (pattern_mix.lifestyle_shift < 0.0 || pattern_mix.impulsive_surge < 0.0 ||
        std::abs(pattern_mix.lifestyle_shift + pattern_mix.impulsive_surge - 1.0) > 1e-9) {
        throw ConfigError("pattern fractions must be non-negative and sum to 1");
    }
    if (surge_peak_per_week < 1) {
        throw ConfigError("surge peak must be at least 1 per week");
    }
    if (decoy_rate < 0.0 || decoy_rate > 1.0) {
        throw ConfigError("decoy_rate must lie in [0, 1]");
    }
}

SyntheticData generate_synthetic_with_truth(const SynthesisConfig& cfg) {
    if (cfg.n_users == 0) {
        throw EmptyDatasetError();
    }
    cfg.validate();

    // Exact label quota, then exact pattern quota among positives.
    const auto n_pos = static_cast<std::size_t>(std::llround(cfg.positive_rate * static_cast<double>(cfg.n_users)));
    const auto n_shift = static_cast<std::size_t>(std::llround(cfg.pattern_mix.lifestyle_shift * static_cast<double>(n_pos)));
    std::vector<std::size_t> order(cfg.n_users);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(splitmix64(cfg.seed));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<PlantedPattern> patterns(cfg.n_users, PlantedPattern::none);
    for (std::size_t k = 0; k < n_pos; ++k) {
        patterns[order[k]] = k < n_shift ? PlantedPattern::lifestyle_shift : PlantedPattern::impulsive_surge;
    }

    SyntheticData out;
    out.dataset.split = Split::train;
    out.dataset.records.reserve(cfg.n_users);
    out.truth.resize(cfg.n_users);
    for (std::size_t i = 0; i < cfg.n_users; ++i) {
        out.dataset.records.push_back(generate_user(cfg, i, patterns[i], out.truth[i]));
    }
    return out;
}

Dataset generate_synthetic(const SynthesisConfig& cfg) {
    return generate_synthetic_with_truth(cfg).dataset;
}

} // namespace lbsf
