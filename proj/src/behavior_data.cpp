#include "lbsf/behavior_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <tuple>
#include <unordered_set>

#include "lbsf/error.hpp"

namespace lbsf {

using nlohmann::json;

bool chronological_less(const PaymentBehavior& a, const PaymentBehavior& b) {
    return std::tie(a.timestamp, a.merchant, a.description, a.amount) <
           std::tie(b.timestamp, b.merchant, b.description, b.amount);
}

void sort_chronologically(std::vector<PaymentBehavior>& behaviors) {
    std::sort(behaviors.begin(), behaviors.end(), chronological_less);
}

const char* to_string(Split split) {
    switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    }
    return "unknown";
}

std::size_t Dataset::positives() const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const UserRecord& r) {
        return r.label && *r.label == 1;
    }));
}

namespace {

bool has_cent_precision(double amount) {
    const double cents = amount * 100.0;
    return std::abs(cents - std::round(cents)) <= 1e-6 * std::max(1.0, std::abs(amount));
}

void add_unique(std::vector<std::string>& out, std::string msg) {
    if (std::find(out.begin(), out.end(), msg) == out.end()) {
        out.push_back(std::move(msg));
    }
}

} // namespace

std::vector<std::string> validate_record(const UserRecord& record) {
    std::vector<std::string> violations;
    if (record.user_id.empty()) {
        add_unique(violations, "user_id: must be non-empty");
    }
    for (std::size_t i = 0; i < record.behaviors.size(); ++i) {
        const auto& b = record.behaviors[i];
        if (b.merchant.empty()) {
            add_unique(violations, "merchant: must be non-empty");
        }
        if (b.timestamp <= 0) {
            add_unique(violations, "timestamp: must be > 0");
        }
        if (!std::isfinite(b.amount)) {
            add_unique(violations, "amount: must be finite");
        } else if (b.amount < 0.0) {
            add_unique(violations, "amount: must be ≥ 0");
        } else if (!has_cent_precision(b.amount)) {
            add_unique(violations, "amount: at most two fractional digits");
        }
        if (i > 0 && record.behaviors[i - 1].timestamp > b.timestamp) {
            add_unique(violations, "behaviors: must be sorted by timestamp");
        }
    }
    if (record.label && *record.label != 0 && *record.label != 1) {
        add_unique(violations, "label: must be 0 or 1");
    }
    return violations;
}

namespace {

const json& require(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw ParseError(line, std::string("missing key '") + key + "'");
    }
    return *it;
}

std::string require_string(const json& obj, const char* key, std::size_t line) {
    const json& v = require(obj, key, line);
    if (!v.is_string()) {
        throw ParseError(line, std::string("'") + key + "' must be a string");
    }
    return v.get<std::string>();
}

PaymentBehavior parse_behavior(const json& j, std::size_t line) {
    if (!j.is_object()) {
        throw ParseError(line, "behavior must be an object");
    }
    PaymentBehavior b;
    b.merchant = require_string(j, "merchant", line);
    b.description = j.contains("description") ? require_string(j, "description", line) : std::string{};

    const json& ts = require(j, "ts", line);
    if (ts.is_number_integer()) {
        b.timestamp = ts.get<std::int64_t>();
    } else if (ts.is_number_float() && std::floor(ts.get<double>()) == ts.get<double>() &&
               std::abs(ts.get<double>()) < 9.0e15) {
        b.timestamp = static_cast<std::int64_t>(ts.get<double>());
    } else {
        throw ValidationError("ts", "line " + std::to_string(line) + ": ts: must be an integer");
    }

    const json& amount = require(j, "amount", line);
    if (!amount.is_number()) {
        throw ValidationError("amount", "line " + std::to_string(line) + ": amount: must be a number");
    }
    b.amount = amount.get<double>();
    if (b.amount < 0.0) {
        throw ValidationError("amount", "line " + std::to_string(line) + ": amount: must be ≥ 0");
    }
    return b;
}

} // namespace

Dataset parse_jsonl(std::istream& in, Split split) {
    Dataset dataset;
    dataset.split = split;
    std::unordered_set<std::string> seen;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) {
            continue;
        }
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(line, std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object()) {
            throw ParseError(line, "expected a JSON object");
        }
        if (j.contains("_meta")) {
            continue;
        }

        UserRecord record;
        const json& uid = require(j, "user_id", line);
        if (uid.is_string()) {
            record.user_id = uid.get<std::string>();
        } else if (uid.is_number_integer()) {
            record.user_id = std::to_string(uid.get<std::int64_t>());
        } else {
            throw ParseError(line, "'user_id' must be a string");
        }

        if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
            if (!it->is_number_integer()) {
                throw ValidationError("label", "line " + std::to_string(line) + ": label: must be 0 or 1");
            }
            record.label = it->get<int>();
        }

        const json& behaviors = require(j, "behaviors", line);
        if (!behaviors.is_array()) {
            throw ParseError(line, "'behaviors' must be an array");
        }
        record.behaviors.reserve(behaviors.size());
        for (const auto& b : behaviors) {
            record.behaviors.push_back(parse_behavior(b, line));
        }
        sort_chronologically(record.behaviors);

        if (auto violations = validate_record(record); !violations.empty()) {
            const std::string& first = violations.front();
            throw ValidationError(first.substr(0, first.find(':')), "line " + std::to_string(line) + ": " + first);
        }
        if (!seen.insert(record.user_id).second) {
            throw ValidationError("user_id", "line " + std::to_string(line) + ": user_id: duplicate '" +
                                                 record.user_id + "'");
        }
        dataset.records.push_back(std::move(record));
    }
    return dataset;
}

Dataset load_jsonl(const std::string& path, Split split) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path);
    }
    return parse_jsonl(in, split);
}

void write_jsonl(std::ostream& out, const Dataset& dataset, const json* meta) {
    if (meta != nullptr) {
        out << json{{"_meta", *meta}}.dump() << '\n';
    }
    for (const auto& r : dataset.records) {
        json behaviors = json::array();
        for (const auto& b : r.behaviors) {
            behaviors.push_back({{"merchant", b.merchant},
                                 {"description", b.description},
                                 {"ts", b.timestamp},
                                 {"amount", b.amount}});
        }
        json j{{"user_id", r.user_id}, {"behaviors", std::move(behaviors)}};
        if (r.label) {
            j["label"] = *r.label;
        }
        out << j.dump() << '\n';
    }
}

DatasetSplit split_dataset(const Dataset& dataset, double held_out_fraction, std::uint64_t seed) {
    if (held_out_fraction < 0.0 || held_out_fraction > 1.0) {
        throw ConfigError("held-out fraction must lie in [0, 1]");
    }
    // Strata: unlabeled, negative, positive.
    std::vector<std::size_t> strata[3];
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        const auto& label = dataset.records[i].label;
        strata[label ? *label + 1 : 0].push_back(i);
    }
    std::mt19937_64 rng(seed);
    std::vector<bool> held(dataset.records.size(), false);
    for (auto& stratum : strata) {
        std::shuffle(stratum.begin(), stratum.end(), rng);
        const auto take = static_cast<std::size_t>(std::llround(held_out_fraction * static_cast<double>(stratum.size())));
        for (std::size_t k = 0; k < take; ++k) {
            held[stratum[k]] = true;
        }
    }
    DatasetSplit out;
    out.train.split = Split::train;
    out.held_out.split = Split::test;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        (held[i] ? out.held_out : out.train).records.push_back(dataset.records[i]);
    }
    return out;
}

} // namespace lbsf
