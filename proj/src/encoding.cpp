#include "lbsf/encoding.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "lbsf/error.hpp"

namespace lbsf {

void TokenVocab::validate() const {
    if (hash_buckets < 2) {
        throw ConfigError("encode.hash_buckets must be at least 2");
    }
    if (token_dim == 0) {
        throw ConfigError("encode.token_dim must be positive");
    }
}

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

bool is_separator(char32_t cp) {
    if (cp < 0x80) {
        const auto c = static_cast<unsigned char>(cp);
        return c <= 0x20 || c == 0x7f || (c >= 0x21 && c <= 0x2f) || (c >= 0x3a && c <= 0x40) ||
               (c >= 0x5b && c <= 0x60) || (c >= 0x7b && c <= 0x7e);
    }
    return (cp >= 0x80 && cp <= 0xbf) || cp == 0xd7 || cp == 0xf7 || cp == 0x1680 ||
           (cp >= 0x2000 && cp <= 0x206f) || (cp >= 0x3000 && cp <= 0x303f) || (cp >= 0xfe30 && cp <= 0xfe4f) ||
           (cp >= 0xff01 && cp <= 0xff0f) || (cp >= 0xff1a && cp <= 0xff20) || (cp >= 0xff3b && cp <= 0xff40) ||
           (cp >= 0xff5b && cp <= 0xff65);
}

// Decodes one UTF-8 sequence at s[i]; malformed bytes decode as themselves.
char32_t decode_utf8(std::string_view s, std::size_t i, std::size_t& len) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) {
        return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xc0) == 0x80;
    };
    auto byte = [&](std::size_t k) { return static_cast<char32_t>(static_cast<unsigned char>(s[i + k]) & 0x3f); };
    if (b0 >= 0xc0 && b0 < 0xe0 && cont(1)) {
        len = 2;
        return (static_cast<char32_t>(b0 & 0x1f) << 6) | byte(1);
    }
    if (b0 >= 0xe0 && b0 < 0xf0 && cont(1) && cont(2)) {
        len = 3;
        return (static_cast<char32_t>(b0 & 0x0f) << 12) | (byte(1) << 6) | byte(2);
    }
    if (b0 >= 0xf0 && b0 < 0xf8 && cont(1) && cont(2) && cont(3)) {
        len = 4;
        return (static_cast<char32_t>(b0 & 0x07) << 18) | (byte(1) << 12) | (byte(2) << 6) | byte(3);
    }
    len = 1;
    return b0 < 0x80 ? b0 : 0xfffd;
}

} // namespace

std::vector<std::uint32_t> tokenize_text(std::string_view text, const TokenVocab& vocab) {
    std::vector<std::uint32_t> out;
    std::string token;
    auto flush = [&] {
        if (!token.empty()) {
            out.push_back(static_cast<std::uint32_t>(fnv1a64(token) % vocab.hash_buckets));
            token.clear();
        }
    };
    for (std::size_t i = 0; i < text.size();) {
        std::size_t len = 1;
        const char32_t cp = decode_utf8(text, i, len);
        if (is_separator(cp)) {
            flush();
        } else if (cp < 0x80) {
            char c = text[i];
            if (c >= 'A' && c <= 'Z') {
                c = static_cast<char>(c - 'A' + 'a');
            }
            token.push_back(c);
        } else {
            token.append(text.substr(i, len));
        }
        i += len;
    }
    flush();
    return out;
}

template <class Real>
nn::Tensor<Real> encode_text(std::string_view text, const TokenVocab& vocab, const nn::Tensor<Real>& table) {
    if (table.rank() != 2 || table.rows() != vocab.hash_buckets || table.cols() != vocab.token_dim) {
        throw ContractError("encode_text: table " + nn::shape_string(table.shape()) + " does not match vocabulary");
    }
    nn::Tensor<Real> out = nn::Tensor<Real>::matrix(1, vocab.token_dim);
    const auto tokens = tokenize_text(text, vocab);
    if (tokens.empty()) {
        return out;
    }
    for (auto t : tokens) {
        const auto r = table.row(t);
        for (std::size_t c = 0; c < vocab.token_dim; ++c) {
            out[c] += r[c];
        }
    }
    const Real inv = Real(1) / static_cast<Real>(tokens.size());
    for (auto& v : out.values()) {
        v *= inv;
    }
    return out;
}

TimeFeatures time_embed(std::int64_t epoch_seconds) {
    using namespace std::chrono;
    const sys_seconds tp{seconds{epoch_seconds}};
    const auto day = floor<days>(tp);
    const year_month_day ymd{day};
    const weekday wd{day};
    const auto hour = duration_cast<hours>(tp - day).count();

    auto phi = [](double t, double period, double* dst) {
        const double angle = 2.0 * std::numbers::pi * t / period;
        dst[0] = std::cos(angle);
        dst[1] = std::sin(angle);
    };
    TimeFeatures f{};
    phi(static_cast<double>(static_cast<unsigned>(ymd.month()) - 1), 12.0, &f[0]);
    phi(static_cast<double>(static_cast<unsigned>(ymd.day()) - 1), 31.0, &f[2]);
    phi(static_cast<double>(wd.c_encoding()), 7.0, &f[4]);
    phi(static_cast<double>(hour), 24.0, &f[6]);
    return f;
}

AmountStats fit_amount_stats(const Dataset& train) {
    double sum = 0.0;
    double sq = 0.0;
    std::size_t n = 0;
    for (const auto& rec : train.records) {
        for (const auto& b : rec.behaviors) {
            const double x = std::log1p(b.amount);
            sum += x;
            sq += x * x;
            ++n;
        }
    }
    if (n == 0) {
        throw ConfigError("amount statistics: training split has no behaviors");
    }
    AmountStats s;
    s.mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sq / static_cast<double>(n) - s.mean * s.mean);
    s.stddev = std::sqrt(var);
    if (!(s.stddev > 1e-12)) {
        throw ConfigError("amount statistics: degenerate training amounts (stddev 0)");
    }
    return s;
}

double amount_feature(double amount, const AmountStats& stats) {
    if (!(stats.stddev > 0.0)) {
        throw ConfigError("amount statistics: stddev must be positive");
    }
    return (std::log1p(amount) - stats.mean) / stats.stddev;
}

template <class Real>
BehaviorEncoder<Real>::BehaviorEncoder(nn::ParameterStore<Real>& store, const TokenVocab& vocab, std::size_t d_model,
                                       FieldFlags fields, bool shared_token_table, bool merchant_text,
                                       std::mt19937_64& rng)
    : m_vocab(vocab), m_d_model(d_model), m_fields(fields), m_merchant_text(merchant_text) {
    vocab.validate();
    if (!fields.any()) {
        throw ConfigError("at least one behavior field must be enabled");
    }
    if (d_model == 0) {
        throw ConfigError("encode.d_model must be positive");
    }
    std::normal_distribution<double> normal(0.0, 0.02);
    auto table = [&] {
        nn::Tensor<Real> t = nn::Tensor<Real>::matrix(vocab.hash_buckets, vocab.token_dim);
        for (auto& v : t.values()) {
            v = static_cast<Real>(normal(rng));
        }
        return t;
    };
    m_token_table = store.add("encode.token_table", table());
    if (merchant_text) {
        m_merchant_table = shared_token_table ? m_token_table : store.add("encode.merchant_table", table());
    }
    m_behavior_fc = nn::add_linear(store, "encode.behavior_fc", fields.input_width(vocab.token_dim), d_model, rng);
    if (merchant_text) {
        m_merchant_fc = nn::add_linear(store, "encode.merchant_fc", vocab.token_dim, d_model, rng);
    }
}

template <class Real>
BehaviorEncoder<Real> BehaviorEncoder<Real>::bind(const nn::ParameterStore<Real>& store, const TokenVocab& vocab,
                                                  std::size_t d_model, FieldFlags fields, bool shared_token_table,
                                                  bool merchant_text) {
    BehaviorEncoder e;
    e.m_vocab = vocab;
    e.m_d_model = d_model;
    e.m_fields = fields;
    e.m_merchant_text = merchant_text;
    e.m_token_table = store.index_of("encode.token_table");
    e.m_behavior_fc = {store.index_of("encode.behavior_fc.weight"), store.index_of("encode.behavior_fc.bias")};
    if (merchant_text) {
        e.m_merchant_table = shared_token_table ? e.m_token_table : store.index_of("encode.merchant_table");
        e.m_merchant_fc = {store.index_of("encode.merchant_fc.weight"), store.index_of("encode.merchant_fc.bias")};
    }
    const auto& w = store[e.m_behavior_fc.weight].value;
    if (w.rows() != fields.input_width(vocab.token_dim) || w.cols() != d_model) {
        throw ContractError("encode.behavior_fc.weight has shape " + nn::shape_string(w.shape()) +
                            ", expected [" + std::to_string(fields.input_width(vocab.token_dim)) + ", " +
                            std::to_string(d_model) + "]");
    }
    return e;
}

template <class Real>
nn::Var BehaviorEncoder<Real>::encode(nn::Graph<Real>& g, const std::vector<const PaymentBehavior*>& rows,
                                      const AmountStats& stats) const {
    const std::size_t n = rows.size();
    std::vector<bool> keep(n);
    for (std::size_t i = 0; i < n; ++i) {
        keep[i] = rows[i] != nullptr;
    }

    nn::Var features;
    auto append = [&](nn::Var part) { features = features.valid() ? nn::concat_cols(g, features, part) : part; };

    if (m_fields.description) {
        std::vector<std::vector<std::uint32_t>> bags(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (rows[i] != nullptr) {
                bags[i] = tokenize_text(rows[i]->description, m_vocab);
            }
        }
        append(nn::embedding_bag_mean(g, g.param(m_token_table), bags));
    }
    const std::size_t dense = (m_fields.timing ? kTimeFeatureCount : 0) + (m_fields.amount ? 1 : 0);
    if (dense > 0) {
        nn::Tensor<Real> side = nn::Tensor<Real>::matrix(n, dense);
        for (std::size_t i = 0; i < n; ++i) {
            if (rows[i] == nullptr) {
                continue;
            }
            std::size_t c = 0;
            if (m_fields.timing) {
                for (double v : time_embed(rows[i]->timestamp)) {
                    side(i, c++) = static_cast<Real>(v);
                }
            }
            if (m_fields.amount) {
                side(i, c) = static_cast<Real>(amount_feature(rows[i]->amount, stats));
            }
        }
        append(g.constant(std::move(side)));
    }
    return nn::mask_rows(g, nn::apply_linear(g, features, m_behavior_fc), keep);
}

template <class Real>
nn::Var BehaviorEncoder<Real>::encode_merchants(nn::Graph<Real>& g, const std::vector<std::string>& names) const {
    std::vector<std::vector<std::uint32_t>> bags;
    bags.reserve(names.size());
    for (const auto& name : names) {
        bags.push_back(tokenize_text(name, m_vocab));
    }
    return nn::apply_linear(g, nn::embedding_bag_mean(g, g.param(m_merchant_table), bags), m_merchant_fc);
}

template <class Real>
nn::Tensor<Real> BehaviorEncoder<Real>::encode_behavior(const nn::ParameterStore<Real>& store, const PaymentBehavior& b,
                                                        const AmountStats& stats) const {
    nn::Graph<Real> g(&store);
    const nn::Var out = encode(g, {&b}, stats);
    return g.value(out);
}

template nn::Tensor<float> encode_text<float>(std::string_view, const TokenVocab&, const nn::Tensor<float>&);
template nn::Tensor<double> encode_text<double>(std::string_view, const TokenVocab&, const nn::Tensor<double>&);
template class BehaviorEncoder<float>;
template class BehaviorEncoder<double>;

} // namespace lbsf
