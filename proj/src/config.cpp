#include "lbsf/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>

#include "lbsf/error.hpp"

namespace lbsf {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError(key + ": '" + v + "' is not a valid number");
    }
    return out;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    return parse_number<std::size_t>(key, v);
}

double parse_real(const std::string& key, const std::string& v) {
    return parse_number<double>(key, v);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") {
        return true;
    }
    if (v == "false") {
        return false;
    }
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
    std::string body = v;
    if (body.size() >= 2 && body.front() == '[' && body.back() == ']') {
        body = body.substr(1, body.size() - 2);
    }
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= body.size()) {
        const auto comma = body.find(',', start);
        const std::string item = trim(body.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (!item.empty()) {
            out.push_back(parse_count(key, item));
        }
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    if (out.empty()) {
        throw ConfigError(key + ": expected a non-empty list");
    }
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto count = [&](const char* k, auto member) {
            t[k] = [member](RunConfig& c, const std::string& key, const std::string& v) { member(c) = parse_count(key, v); };
        };
        auto real = [&](const char* k, auto member) {
            t[k] = [member](RunConfig& c, const std::string& key, const std::string& v) { member(c) = parse_real(key, v); };
        };
        auto flag = [&](const char* k, auto member) {
            t[k] = [member](RunConfig& c, const std::string& key, const std::string& v) { member(c) = parse_bool(key, v); };
        };

        count("fold.merchant_slots", [](RunConfig& c) -> std::size_t& { return c.model.fold.merchant_slots; });
        count("fold.max_per_merchant", [](RunConfig& c) -> std::size_t& { return c.model.fold.max_per_merchant; });
        t["fold.M"] = t["fold.merchant_slots"];
        t["fold.L_max"] = t["fold.max_per_merchant"];

        count("encode.hash_buckets", [](RunConfig& c) -> std::size_t& { return c.model.vocab.hash_buckets; });
        count("encode.token_dim", [](RunConfig& c) -> std::size_t& { return c.model.vocab.token_dim; });
        count("encode.d_model", [](RunConfig& c) -> std::size_t& { return c.model.d_model; });

        count("model.n_heads", [](RunConfig& c) -> std::size_t& { return c.model.n_heads; });
        count("model.n_layers", [](RunConfig& c) -> std::size_t& { return c.model.n_layers; });
        count("model.ffn_hidden", [](RunConfig& c) -> std::size_t& { return c.model.ffn_hidden; });
        real("model.dropout", [](RunConfig& c) -> double& { return c.model.dropout; });
        flag("model.shared_token_table", [](RunConfig& c) -> bool& { return c.model.shared_token_table; });
        flag("model.merchant_pos_enc", [](RunConfig& c) -> bool& { return c.model.merchant_pos_enc; });
        flag("model.use_merchant_folding",
             [](RunConfig& c) -> bool& { return c.model.ablation.use_merchant_folding; });
        flag("model.use_amount", [](RunConfig& c) -> bool& { return c.model.ablation.use_amount; });
        flag("model.use_timing", [](RunConfig& c) -> bool& { return c.model.ablation.use_timing; });
        flag("model.use_description", [](RunConfig& c) -> bool& { return c.model.ablation.use_description; });

        real("train.learning_rate", [](RunConfig& c) -> double& { return c.train.learning_rate; });
        count("train.batch_size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
        count("train.epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; });
        real("train.beta1", [](RunConfig& c) -> double& { return c.train.beta1; });
        real("train.beta2", [](RunConfig& c) -> double& { return c.train.beta2; });
        real("train.eps", [](RunConfig& c) -> double& { return c.train.eps; });
        real("train.weight_decay", [](RunConfig& c) -> double& { return c.train.weight_decay; });
        t["train.seed"] = [](RunConfig& c, const std::string& key, const std::string& v) {
            c.train.seed = parse_number<std::uint64_t>(key, v);
        };
        t["train.grad_clip_norm"] = [](RunConfig& c, const std::string& key, const std::string& v) {
            const double x = parse_real(key, v);
            if (x == 0.0) {
                c.train.grad_clip_norm.reset();
            } else {
                c.train.grad_clip_norm = x;
            }
        };
        real("train.pos_weight", [](RunConfig& c) -> double& { return c.train.pos_weight; });
        flag("train.early_stopping", [](RunConfig& c) -> bool& { return c.train.early_stopping; });
        count("train.patience", [](RunConfig& c) -> std::size_t& { return c.train.patience; });
        count("train.workers", [](RunConfig& c) -> std::size_t& { return c.train.workers; });

        real("eval.recall_fraction", [](RunConfig& c) -> double& { return c.eval.recall_fraction; });
        count("eval.top_k_merchants", [](RunConfig& c) -> std::size_t& { return c.eval.top_k_merchants; });
        real("eval.validation_fraction", [](RunConfig& c) -> double& { return c.eval.validation_fraction; });
        t["eval.bench_t_values"] = [](RunConfig& c, const std::string& key, const std::string& v) {
            c.eval.bench_t_values = parse_list(key, v);
        };
        count("eval.bench_merchants", [](RunConfig& c) -> std::size_t& { return c.eval.bench_merchants; });
        count("eval.bench_trials", [](RunConfig& c) -> std::size_t& { return c.eval.bench_trials; });

        count("synth.n_users", [](RunConfig& c) -> std::size_t& { return c.synth.n_users; });
        real("synth.positive_rate", [](RunConfig& c) -> double& { return c.synth.positive_rate; });
        t["synth.t_span_days"] = [](RunConfig& c, const std::string& key, const std::string& v) {
            c.synth.t_span_days = parse_number<int>(key, v);
        };
        real("synth.mean_behaviors_per_day", [](RunConfig& c) -> double& { return c.synth.mean_behaviors_per_day; });
        t["synth.seed"] = [](RunConfig& c, const std::string& key, const std::string& v) {
            c.synth.seed = parse_number<std::uint64_t>(key, v);
        };
        real("synth.lifestyle_shift", [](RunConfig& c) -> double& { return c.synth.pattern_mix.lifestyle_shift; });
        real("synth.impulsive_surge", [](RunConfig& c) -> double& { return c.synth.pattern_mix.impulsive_surge; });
        t["synth.surge_peak_per_week"] = [](RunConfig& c, const std::string& key, const std::string& v) {
            c.synth.surge_peak_per_week = parse_number<int>(key, v);
        };
        real("synth.decoy_rate", [](RunConfig& c) -> double& { return c.synth.decoy_rate; });
        return t;
    }();
    return table;
}

std::string unquote(const std::string& v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
        return v.substr(1, v.size() - 2);
    }
    return v;
}

} // namespace

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto& t = setters();
    const auto it = t.find(key);
    if (it == t.end()) {
        throw ConfigError("unknown config key '" + key + "'");
    }
    it->second(cfg, key, unquote(trim(value)));
}

RunConfig parse_run_config(std::istream& in) {
    RunConfig cfg;
    std::string section;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string text = line;
        bool quoted = false;
        for (std::size_t i = 0; i < text.size(); ++i) {
            if (text[i] == '"') {
                quoted = !quoted;
            } else if (text[i] == '#' && !quoted) {
                text.resize(i);
                break;
            }
        }
        text = trim(text);
        if (text.empty()) {
            continue;
        }
        const std::string where = "config line " + std::to_string(lineno) + ": ";
        if (text.front() == '[') {
            if (text.back() != ']' || text.size() < 3) {
                throw ConfigError(where + "malformed section header");
            }
            section = trim(text.substr(1, text.size() - 2));
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(where + "expected key = value");
        }
        std::string key = trim(text.substr(0, eq));
        if (key.empty()) {
            throw ConfigError(where + "empty key");
        }
        if (!section.empty() && key.find('.') == std::string::npos) {
            key = section + "." + key;
        }
        try {
            apply_config_value(cfg, key, text.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config '" + path + "'");
    }
    return parse_run_config(in);
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    synth.validate();
    if (!(eval.recall_fraction > 0.0) || eval.recall_fraction > 1.0) {
        throw ConfigError("eval.recall_fraction must lie in (0, 1]");
    }
    if (eval.validation_fraction < 0.0 || eval.validation_fraction >= 1.0) {
        throw ConfigError("eval.validation_fraction must lie in [0, 1)");
    }
    if (eval.bench_merchants == 0 || eval.bench_trials == 0) {
        throw ConfigError("eval.bench_merchants and eval.bench_trials must be positive");
    }
}

json RunConfig::to_json() const {
    json j;
    j["fold"] = {{"merchant_slots", model.fold.merchant_slots}, {"max_per_merchant", model.fold.max_per_merchant}};
    j["encode"] = {{"hash_buckets", model.vocab.hash_buckets},
                   {"token_dim", model.vocab.token_dim},
                   {"d_model", model.d_model}};
    j["model"] = {{"n_heads", model.n_heads},
                  {"n_layers", model.n_layers},
                  {"ffn_hidden", model.ffn_hidden},
                  {"dropout", model.dropout},
                  {"shared_token_table", model.shared_token_table},
                  {"merchant_pos_enc", model.merchant_pos_enc},
                  {"use_merchant_folding", model.ablation.use_merchant_folding},
                  {"use_amount", model.ablation.use_amount},
                  {"use_timing", model.ablation.use_timing},
                  {"use_description", model.ablation.use_description}};
    j["train"] = {{"learning_rate", train.learning_rate},
                  {"batch_size", train.batch_size},
                  {"epochs", train.epochs},
                  {"beta1", train.beta1},
                  {"beta2", train.beta2},
                  {"eps", train.eps},
                  {"weight_decay", train.weight_decay},
                  {"seed", train.seed},
                  {"grad_clip_norm", train.grad_clip_norm ? json(*train.grad_clip_norm) : json(nullptr)},
                  {"pos_weight", train.pos_weight},
                  {"early_stopping", train.early_stopping},
                  {"patience", train.patience},
                  {"workers", train.workers}};
    j["eval"] = {{"recall_fraction", eval.recall_fraction},
                 {"top_k_merchants", eval.top_k_merchants},
                 {"validation_fraction", eval.validation_fraction},
                 {"bench_t_values", eval.bench_t_values},
                 {"bench_merchants", eval.bench_merchants},
                 {"bench_trials", eval.bench_trials}};
    j["synth"] = {{"n_users", synth.n_users},
                  {"positive_rate", synth.positive_rate},
                  {"t_span_days", synth.t_span_days},
                  {"mean_behaviors_per_day", synth.mean_behaviors_per_day},
                  {"seed", synth.seed},
                  {"lifestyle_shift", synth.pattern_mix.lifestyle_shift},
                  {"impulsive_surge", synth.pattern_mix.impulsive_surge},
                  {"surge_peak_per_week", synth.surge_peak_per_week},
                  {"decoy_rate", synth.decoy_rate}};
    return j;
}

} // namespace lbsf
