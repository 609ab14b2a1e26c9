#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace lbsf {

// One payment: merchant, free-text description, epoch seconds, amount in
// currency units with at most two fractional digits.
struct PaymentBehavior {
    std::string merchant;
    std::string description;
    std::int64_t timestamp = 0;
    double amount = 0.0;

    friend bool operator==(const PaymentBehavior&, const PaymentBehavior&) = default;
};

// Total chronological order: timestamp first, remaining fields break ties so
// the sorted form is independent of input order.
bool chronological_less(const PaymentBehavior& a, const PaymentBehavior& b);
void sort_chronologically(std::vector<PaymentBehavior>& behaviors);

struct UserRecord {
    std::string user_id;
    std::vector<PaymentBehavior> behaviors;
    std::optional<int> label;

    friend bool operator==(const UserRecord&, const UserRecord&) = default;
};

enum class Split { train, validation, test };

const char* to_string(Split split);

struct Dataset {
    std::vector<UserRecord> records;
    Split split = Split::train;

    bool empty() const noexcept { return records.empty(); }
    std::size_t size() const noexcept { return records.size(); }
    std::size_t positives() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Empty iff every record invariant holds. Each entry reads "field: rule".
std::vector<std::string> validate_record(const UserRecord& record);

// One JSON object per line. Blank lines and a leading {"_meta": ...} header
// line are skipped. Behaviors are re-sorted chronologically per user; user
// order is preserved. Throws ParseError (with line number) on malformed
// JSON or schema, ValidationError on invariant violations.
Dataset parse_jsonl(std::istream& in, Split split = Split::train);
Dataset load_jsonl(const std::string& path, Split split = Split::train);

// Writes the same schema parse_jsonl reads. When `meta` is non-null it is
// emitted first as a {"_meta": ...} header line.
void write_jsonl(std::ostream& out, const Dataset& dataset, const nlohmann::json* meta = nullptr);

// Deterministic label-stratified split. Records keep their relative order.
struct DatasetSplit {
    Dataset train;
    Dataset held_out;
};
DatasetSplit split_dataset(const Dataset& dataset, double held_out_fraction, std::uint64_t seed);

} // namespace lbsf
