#include "lbsf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "lbsf/error.hpp"
#include "lbsf/version.hpp"

namespace lbsf {

using nlohmann::json;

json model_config_to_json(const ModelConfig& cfg) {
    json j;
    j["architecture"] = {{"d_model", cfg.d_model},
                         {"n_heads", cfg.n_heads},
                         {"n_layers", cfg.n_layers},
                         {"ffn_hidden", cfg.ffn_hidden},
                         {"dropout", cfg.dropout},
                         {"shared_token_table", cfg.shared_token_table},
                         {"merchant_pos_enc", cfg.merchant_pos_enc}};
    j["ablation"] = {{"use_merchant_folding", cfg.ablation.use_merchant_folding},
                     {"use_amount", cfg.ablation.use_amount},
                     {"use_timing", cfg.ablation.use_timing},
                     {"use_description", cfg.ablation.use_description}};
    j["fold"] = {{"merchant_slots", cfg.fold.merchant_slots}, {"max_per_merchant", cfg.fold.max_per_merchant}};
    j["encode"] = {{"hash_buckets", cfg.vocab.hash_buckets},
                   {"token_dim", cfg.vocab.token_dim},
                   {"concat_order", {"description", "time", "amount"}}};
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    try {
        ModelConfig c;
        const auto& a = j.at("architecture");
        c.d_model = a.at("d_model").get<std::size_t>();
        c.n_heads = a.at("n_heads").get<std::size_t>();
        c.n_layers = a.at("n_layers").get<std::size_t>();
        c.ffn_hidden = a.at("ffn_hidden").get<std::size_t>();
        c.dropout = a.at("dropout").get<double>();
        c.shared_token_table = a.at("shared_token_table").get<bool>();
        c.merchant_pos_enc = a.at("merchant_pos_enc").get<bool>();
        const auto& ab = j.at("ablation");
        c.ablation.use_merchant_folding = ab.at("use_merchant_folding").get<bool>();
        c.ablation.use_amount = ab.at("use_amount").get<bool>();
        c.ablation.use_timing = ab.at("use_timing").get<bool>();
        c.ablation.use_description = ab.at("use_description").get<bool>();
        c.fold.merchant_slots = j.at("fold").at("merchant_slots").get<std::size_t>();
        c.fold.max_per_merchant = j.at("fold").at("max_per_merchant").get<std::size_t>();
        c.vocab.hash_buckets = j.at("encode").at("hash_buckets").get<std::size_t>();
        c.vocab.token_dim = j.at("encode").at("token_dim").get<std::size_t>();
        if (j.at("encode").contains("concat_order") &&
            j.at("encode").at("concat_order") != json({"description", "time", "amount"})) {
            throw ConfigError("unsupported feature concat order " + j.at("encode").at("concat_order").dump());
        }
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) {
        b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }
    out.write(b, 8);
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
public:
    explicit Reader(std::string bytes) : m_bytes(std::move(bytes)) {}

    const char* take(std::size_t n, const char* what) {
        if (m_bytes.size() - m_pos < n) {
            throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
        }
        const char* p = m_bytes.data() + m_pos;
        m_pos += n;
        return p;
    }
    std::uint32_t u32(const char* what) {
        const auto* p = reinterpret_cast<const unsigned char*>(take(4, what));
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        }
        return v;
    }
    std::uint64_t u64(const char* what) {
        const auto* p = reinterpret_cast<const unsigned char*>(take(8, what));
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        }
        return v;
    }
    std::string string(const char* what) {
        const std::uint32_t n = u32(what);
        return std::string(take(n, what), n);
    }
    bool done() const noexcept { return m_pos == m_bytes.size(); }

private:
    std::string m_bytes;
    std::size_t m_pos = 0;
};

json parse_block(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt ") + what + " block: " + e.what());
    }
}

} // namespace

void write_checkpoint(std::ostream& out, const LbsfModel<float>& model, const CheckpointMeta& meta) {
    out.write("LBSF", 4);
    put_u32(out, kCheckpointVersion);

    json cfg = model_config_to_json(model.config());
    cfg["amount_stats"] = {{"mean", model.amount_stats().mean}, {"stddev", model.amount_stats().stddev}};
    cfg["tool_version"] = kToolVersion;
    put_string(out, cfg.dump());

    const auto& params = model.params();
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put_string(out, p.name);
        put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
        for (std::size_t d : p.value.shape()) {
            put_u64(out, d);
        }
        for (float v : p.value.values()) {
            put_u32(out, std::bit_cast<std::uint32_t>(v));
        }
    }

    json m;
    m["epoch"] = meta.epoch;
    m["seed"] = meta.seed;
    m["loss_history"] = meta.loss_history;
    m["extra"] = meta.extra;
    put_string(out, m.dump());
    if (!out) {
        throw CheckpointError("failed to write checkpoint");
    }
}

void save_checkpoint(const LbsfModel<float>& model, const std::string& path, const CheckpointMeta& meta) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CheckpointError("cannot open '" + path + "' for writing");
    }
    write_checkpoint(out, model, meta);
}

LoadedCheckpoint read_checkpoint(std::istream& in) {
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(std::move(bytes));
    if (std::memcmp(r.take(4, "magic"), "LBSF", 4) != 0) {
        throw CheckpointError("not an LBSF checkpoint (bad magic)");
    }
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    const json cfg = parse_block(r.string("config"), "config");
    ModelConfig mc;
    AmountStats stats;
    try {
        mc = model_config_from_json(cfg);
        stats.mean = cfg.at("amount_stats").at("mean").get<double>();
        stats.stddev = cfg.at("amount_stats").at("stddev").get<double>();
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("config block: ") + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("config block: ") + e.what());
    }

    nn::ParameterStore<float> params;
    const std::uint32_t count = r.u32("parameter count");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.string("parameter name");
        const std::uint32_t ndim = r.u32("parameter rank");
        std::vector<std::size_t> shape;
        std::uint64_t total = 1;
        for (std::uint32_t k = 0; k < ndim; ++k) {
            const std::uint64_t d = r.u64("parameter shape");
            if (d != 0 && total > (std::uint64_t{1} << 40) / d) {
                throw CheckpointError("parameter '" + name + "' has an implausible shape");
            }
            total *= d;
            shape.push_back(static_cast<std::size_t>(d));
        }
        const char* payload = r.take(static_cast<std::size_t>(total) * 4, "parameter payload");
        std::vector<float> data(static_cast<std::size_t>(total));
        for (std::size_t k = 0; k < data.size(); ++k) {
            std::uint32_t u = 0;
            for (int b = 0; b < 4; ++b) {
                u |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[4 * k + b])) << (8 * b);
            }
            data[k] = std::bit_cast<float>(u);
        }
        try {
            params.add(std::move(name), nn::Tensor<float>(std::move(shape), std::move(data)));
        } catch (const Error& e) {
            throw CheckpointError(e.what());
        }
    }
    const json meta = parse_block(r.string("metadata"), "metadata");
    if (!r.done()) {
        throw CheckpointError("trailing bytes after checkpoint metadata");
    }

    LoadedCheckpoint out;
    try {
        out.model = LbsfModel<float>::from_parameters(mc, std::move(params), stats);
        out.meta.epoch = meta.at("epoch").get<std::size_t>();
        out.meta.seed = meta.at("seed").get<std::uint64_t>();
        out.meta.loss_history = meta.at("loss_history").get<std::vector<double>>();
        out.meta.extra = meta.value("extra", json::object());
    } catch (const ContractError& e) {
        throw CheckpointError(e.what());
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("metadata block: ") + e.what());
    }
    out.config = cfg;
    return out;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open checkpoint '" + path + "'");
    }
    return read_checkpoint(in);
}

} // namespace lbsf
