#include "lbsf/folding.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include "lbsf/error.hpp"

namespace lbsf {

void FoldConfig::validate() const {
    if (merchant_slots < 1) {
        throw ConfigError("fold.M must be at least 1");
    }
    if (max_per_merchant < 1) {
        throw ConfigError("fold.L_max must be at least 1");
    }
}

std::size_t FoldedUser::active_merchants() const {
    return static_cast<std::size_t>(std::count(merchant_mask.begin(), merchant_mask.end(), true));
}

std::size_t FoldedUser::retained_behaviors() const {
    std::size_t n = 0;
    for (const auto& s : slots) {
        n += s.active_len();
    }
    return n;
}

std::vector<std::string> select_merchants(const UserRecord& record, const FoldConfig& cfg) {
    struct Stats {
        std::size_t count = 0;
        std::int64_t latest = 0;
    };
    std::map<std::string, Stats> stats;
    for (const auto& b : record.behaviors) {
        auto& s = stats[b.merchant];
        ++s.count;
        s.latest = std::max(s.latest, b.timestamp);
    }
    std::vector<std::pair<std::string, Stats>> ranked(stats.begin(), stats.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second.count != b.second.count) {
            return a.second.count > b.second.count;
        }
        if (a.second.latest != b.second.latest) {
            return a.second.latest > b.second.latest;
        }
        return a.first < b.first;
    });
    const std::size_t keep = std::min(cfg.merchant_slots, ranked.size());
    std::vector<std::string> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        out.push_back(ranked[i].first);
    }
    return out;
}

FoldedUser fold_sequence(const UserRecord& record, const FoldConfig& cfg) {
    cfg.validate();
    const auto selected = select_merchants(record, cfg);
    std::unordered_map<std::string, std::size_t> slot_of;
    for (std::size_t j = 0; j < selected.size(); ++j) {
        slot_of.emplace(selected[j], j);
    }

    std::vector<PaymentBehavior> sorted = record.behaviors;
    sort_chronologically(sorted);

    FoldedUser out;
    out.user_id = record.user_id;
    out.slots.resize(cfg.merchant_slots);
    out.merchant_mask.assign(cfg.merchant_slots, false);
    for (std::size_t j = 0; j < selected.size(); ++j) {
        out.slots[j].merchant = selected[j];
        out.merchant_mask[j] = true;
    }
    for (const auto& b : sorted) {
        if (auto it = slot_of.find(b.merchant); it != slot_of.end()) {
            out.slots[it->second].behaviors.push_back(b);
        }
    }
    out.behavior_masks.assign(cfg.merchant_slots, std::vector<bool>(cfg.max_per_merchant, false));
    for (std::size_t j = 0; j < cfg.merchant_slots; ++j) {
        auto& seq = out.slots[j].behaviors;
        if (seq.size() > cfg.max_per_merchant) {
            seq.erase(seq.begin(), seq.end() - static_cast<std::ptrdiff_t>(cfg.max_per_merchant));
        }
        std::fill_n(out.behavior_masks[j].begin(), seq.size(), true);
    }
    return out;
}

std::size_t max_active_len(const FoldedUser& folded) {
    std::size_t n = 0;
    for (const auto& s : folded.slots) {
        n = std::max(n, s.active_len());
    }
    return n;
}

PaddedFold pad_and_mask(const FoldedUser& folded, const FoldConfig& cfg, std::size_t batch_len) {
    if (folded.slots.size() != cfg.merchant_slots) {
        throw ContractError("pad_and_mask: folded user has " + std::to_string(folded.slots.size()) +
                            " slots, config expects " + std::to_string(cfg.merchant_slots));
    }
    if (batch_len < max_active_len(folded)) {
        throw ContractError("pad_and_mask: batch_len " + std::to_string(batch_len) + " is smaller than active_len " +
                            std::to_string(max_active_len(folded)));
    }
    PaddedFold out;
    out.batch_len = batch_len;
    out.index.assign(folded.slots.size(), std::vector<std::int32_t>(batch_len, -1));
    out.mask.assign(folded.slots.size(), std::vector<bool>(batch_len, false));
    for (std::size_t j = 0; j < folded.slots.size(); ++j) {
        for (std::size_t k = 0; k < folded.slots[j].active_len(); ++k) {
            out.index[j][k] = static_cast<std::int32_t>(k);
            out.mask[j][k] = true;
        }
    }
    return out;
}

} // namespace lbsf
