#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lbsf/behavior_data.hpp"

namespace lbsf {

struct FoldConfig {
    std::size_t merchant_slots = 74;      // M
    std::size_t max_per_merchant = 128;   // L_max, keeps the most recent

    void validate() const;
};

// One merchant slot. `merchant` is empty for a NULL_SLOT.
struct MerchantSlot {
    std::optional<std::string> merchant;
    std::vector<PaymentBehavior> behaviors; // chronological

    bool active() const noexcept { return merchant.has_value(); }
    std::size_t active_len() const noexcept { return behaviors.size(); }

    friend bool operator==(const MerchantSlot&, const MerchantSlot&) = default;
};

struct FoldedUser {
    std::string user_id;
    std::vector<MerchantSlot> slots;               // exactly M entries
    std::vector<bool> merchant_mask;               // true = real merchant
    std::vector<std::vector<bool>> behavior_masks; // M x L_max, true = real behavior

    std::size_t active_merchants() const;
    std::size_t retained_behaviors() const;

    friend bool operator==(const FoldedUser&, const FoldedUser&) = default;
};

// Top-M merchants by transaction count; ties by most recent transaction, then
// by merchant name ascending.
std::vector<std::string> select_merchants(const UserRecord& record, const FoldConfig& cfg);

FoldedUser fold_sequence(const UserRecord& record, const FoldConfig& cfg);

// Slot-major padded layout. index[j][k] is the position of the k-th behavior
// in slot j, or -1 for padding.
struct PaddedFold {
    std::size_t batch_len = 0;
    std::vector<std::vector<std::int32_t>> index;
    std::vector<std::vector<bool>> mask;
};

// Throws ContractError if batch_len is smaller than some active_len.
PaddedFold pad_and_mask(const FoldedUser& folded, const FoldConfig& cfg, std::size_t batch_len);

// Largest active_len across slots.
std::size_t max_active_len(const FoldedUser& folded);

} // namespace lbsf
