#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmd/core.hpp"
#include "dmd/error.hpp"
#include "dmd/util.hpp"

namespace dmd {

using Vector = std::vector<float>;

enum class Activation { Identity, ReLU, Tanh };

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::ReLU: return "relu";
        case Activation::Tanh: return "tanh";
    }
    return "identity";
}

inline std::optional<Activation> parse_activation(std::string_view s) {
    const auto lower = util::to_lower(s);
    if (lower == "identity" || lower == "linear") return Activation::Identity;
    if (lower == "relu") return Activation::ReLU;
    if (lower == "tanh") return Activation::Tanh;
    return std::nullopt;
}

/// y = W x + b with W stored row-major (out x in).
struct AffineLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<float> weight;
    Vector bias;

    float w(std::size_t row, std::size_t col) const { return weight[row * in + col]; }

    static AffineLayer identity(std::size_t n) {
        AffineLayer l{n, n, std::vector<float>(n * n, 0.0f), Vector(n, 0.0f)};
        for (std::size_t i = 0; i < n; ++i) l.weight[i * n + i] = 1.0f;
        return l;
    }
};

/// Contextual embeddings of a whole sentence: the sentence vector and one
/// vector per word.
struct SentenceEmbeddings {
    Vector v_s;
    std::vector<Vector> v_tokens;
};

/// The target word encoded on its own, without sentence context.
struct TargetEmbedding {
    Vector v_t;
};

/// The three vectors the theory heads actually consume. Precomputed and
/// remote providers deliver only these.
struct TheoryInputs {
    Vector v_s;
    Vector v_st;
    Vector v_t;
};

struct TheoryVector {
    Vector h_mip;
    Vector h_spv;
    Vector h_t;
};

/// MIP head `f` and SPV head `g`. Both take a 2*d_e input and emit d_h.
struct HeadWeights {
    std::vector<AffineLayer> f;
    std::vector<AffineLayer> g;
    Activation activation = Activation::ReLU;

    std::size_t embed_dim() const { return f.empty() ? 0 : f.front().in / 2; }
    std::size_t head_dim() const { return f.empty() ? 0 : f.back().out; }

    /// Single identity layers: the key becomes the plain concatenation of
    /// the four source vectors. Usable without any trained weights.
    static HeadWeights identity(std::size_t embed_dim) {
        HeadWeights w;
        w.activation = Activation::Identity;
        w.f.push_back(AffineLayer::identity(2 * embed_dim));
        w.g.push_back(AffineLayer::identity(2 * embed_dim));
        return w;
    }

    /// Throws ShapeError if the layer stack is not well formed.
    void validate() const {
        auto check_stack = [](const std::vector<AffineLayer>& layers, const char* name) {
            if (layers.empty()) throw ShapeError(std::string("head '") + name + "' has no layers");
            for (std::size_t i = 0; i < layers.size(); ++i) {
                const auto& l = layers[i];
                const std::string where = std::string(name) + "[" + std::to_string(i) + "]";
                if (l.in == 0 || l.out == 0) throw ShapeError(where + ": zero-sized layer");
                if (l.weight.size() != l.in * l.out)
                    throw ShapeError(where + ": weight has " + std::to_string(l.weight.size()) +
                                     " entries, expected " + std::to_string(l.in * l.out));
                if (l.bias.size() != l.out)
                    throw ShapeError(where + ": bias length " + std::to_string(l.bias.size()) +
                                     " != " + std::to_string(l.out));
                if (i > 0 && layers[i - 1].out != l.in)
                    throw ShapeError(where + ": input " + std::to_string(l.in) +
                                     " does not match previous output " +
                                     std::to_string(layers[i - 1].out));
                for (float v : l.weight)
                    if (!std::isfinite(v)) throw ShapeError(where + ": non-finite weight");
                for (float v : l.bias)
                    if (!std::isfinite(v)) throw ShapeError(where + ": non-finite bias");
            }
        };
        check_stack(f, "f");
        check_stack(g, "g");
        if (f.front().in % 2 != 0) throw ShapeError("f input dim must be 2*d_e");
        if (f.front().in != g.front().in) throw ShapeError("f and g input dims differ");
        if (f.back().out != g.back().out) throw ShapeError("f and g output dims differ");
    }
};

namespace detail {

inline double activate(Activation a, double x) {
    switch (a) {
        case Activation::Identity: return x;
        case Activation::ReLU: return x > 0.0 ? x : 0.0;
        case Activation::Tanh: return std::tanh(x);
    }
    return x;
}

inline Vector concat(std::span<const float> a, std::span<const float> b) {
    Vector out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

}  // namespace detail

/// Applies act(W x + b) for every layer but the last, which is purely
/// affine. Accumulates in double and rounds once on output.
inline Vector mlp_forward(std::span<const AffineLayer> layers, Activation act,
                          std::span<const float> x) {
    if (layers.empty()) return Vector(x.begin(), x.end());
    if (x.size() != layers.front().in) throw DimMismatch(layers.front().in, x.size());
    std::vector<double> cur(x.begin(), x.end());
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const auto& l = layers[li];
        if (cur.size() != l.in) throw DimMismatch(l.in, cur.size());
        std::vector<double> next(l.out);
        for (std::size_t r = 0; r < l.out; ++r) {
            double acc = l.bias[r];
            const float* row = l.weight.data() + r * l.in;
            for (std::size_t c = 0; c < l.in; ++c) acc += static_cast<double>(row[c]) * cur[c];
            next[r] = (li + 1 < layers.size()) ? detail::activate(act, acc) : acc;
        }
        cur = std::move(next);
    }
    return Vector(cur.begin(), cur.end());
}

/// h_mip = f([v_st; v_t]), h_spv = g([v_s; v_st]), h_t = [h_mip; h_spv].
inline TheoryVector compute_theory_vector(const TheoryInputs& in, const HeadWeights& w) {
    const auto d = w.embed_dim();
    if (in.v_st.size() != d) throw DimMismatch(d, in.v_st.size());
    if (in.v_t.size() != d) throw DimMismatch(d, in.v_t.size());
    if (in.v_s.size() != d) throw DimMismatch(d, in.v_s.size());
    TheoryVector tv;
    tv.h_mip = mlp_forward(w.f, w.activation, detail::concat(in.v_st, in.v_t));
    tv.h_spv = mlp_forward(w.g, w.activation, detail::concat(in.v_s, in.v_st));
    tv.h_t = detail::concat(tv.h_mip, tv.h_spv);
    return tv;
}

inline TheoryVector compute_theory_vector(const SentenceEmbeddings& sent, std::size_t target_index,
                                          const TargetEmbedding& tgt, const HeadWeights& w) {
    if (target_index >= sent.v_tokens.size())
        throw PreconditionError("target_index " + std::to_string(target_index) +
                                " out of range for " + std::to_string(sent.v_tokens.size()) +
                                " token vectors");
    return compute_theory_vector(TheoryInputs{sent.v_s, sent.v_tokens[target_index], tgt.v_t}, w);
}

// ---- embedding providers ---------------------------------------------------

/// Source of encoder vectors for a sample.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual TheoryInputs encode(const Sample& sample) const = 0;
    /// Encoder spec string recorded in datastore metadata.
    virtual std::string spec() const = 0;
};

/// Deterministic offline stand-in for a trained encoder. Each token vector
/// is a unit-norm pseudo-random vector seeded by (seed, sentence, position,
/// word); the sentence vector is their mean.
class TestEncoder final : public EmbeddingProvider {
public:
    TestEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
        if (dim_ == 0) throw PreconditionError("test encoder dim must be >= 1");
    }

    std::size_t dim() const noexcept { return dim_; }

    SentenceEmbeddings encode_sentence(const std::vector<std::string>& words) const {
        const auto sentence = util::join(words, " ");
        SentenceEmbeddings out;
        out.v_tokens.reserve(words.size());
        std::vector<double> mean(dim_, 0.0);
        for (std::size_t i = 0; i < words.size(); ++i) {
            std::uint64_t h = util::fnv1a64("ctx");
            h = util::fnv1a64(sentence, h ^ seed_);
            h = util::fnv1a64(std::to_string(i) + "|" + words[i], h);
            out.v_tokens.push_back(unit_vector(h));
            for (std::size_t d = 0; d < dim_; ++d) mean[d] += out.v_tokens.back()[d];
        }
        out.v_s.resize(dim_);
        for (std::size_t d = 0; d < dim_; ++d)
            out.v_s[d] = static_cast<float>(mean[d] / static_cast<double>(words.size()));
        return out;
    }

    TargetEmbedding encode_target(const std::string& word) const {
        std::uint64_t h = util::fnv1a64("word");
        h = util::fnv1a64(word, h ^ seed_);
        return {unit_vector(h)};
    }

    TheoryInputs encode(const Sample& sample) const override {
        auto sent = encode_sentence(sample.words());
        auto tgt = encode_target(sample.target_word());
        return {std::move(sent.v_s), std::move(sent.v_tokens[sample.target_index()]),
                std::move(tgt.v_t)};
    }

    std::string spec() const override {
        return "test:" + std::to_string(seed_) + ":" + std::to_string(dim_);
    }

private:
    Vector unit_vector(std::uint64_t state) const {
        std::vector<double> raw(dim_);
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (auto& v : raw) {
                // 53 random bits mapped to [-1, 1)
                v = static_cast<double>(util::splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
                norm2 += v * v;
            }
        } while (norm2 == 0.0);
        const double inv = 1.0 / std::sqrt(norm2);
        Vector out(dim_);
        for (std::size_t d = 0; d < dim_; ++d) out[d] = static_cast<float>(raw[d] * inv);
        return out;
    }

    std::size_t dim_;
    std::uint64_t seed_;
};

/// Serves vectors exported ahead of time (e.g. by a transformer encoder),
/// keyed by sample id.
class PrecomputedProvider final : public EmbeddingProvider {
public:
    PrecomputedProvider(std::map<std::string, TheoryInputs> records, std::string source)
        : records_(std::move(records)), source_(std::move(source)) {}

    TheoryInputs encode(const Sample& sample) const override {
        auto it = records_.find(sample.id());
        if (it == records_.end()) throw MissingEmbedding(sample.id());
        return it->second;
    }
    std::string spec() const override { return "precomputed:" + source_; }
    std::size_t size() const noexcept { return records_.size(); }

private:
    std::map<std::string, TheoryInputs> records_;
    std::string source_;
};

/// The datastore key for a sample. Store building and query-time retrieval
/// both go through here so they cannot drift apart.
inline TheoryVector theory_vector_for(const Sample& sample, const EmbeddingProvider& encoder,
                                      const HeadWeights& weights) {
    return compute_theory_vector(encoder.encode(sample), weights);
}

// ---- interchange formats ---------------------------------------------------

namespace detail {

inline Vector json_to_vector(const json& j, const std::string& what) {
    if (!j.is_array()) throw FormatError(0, what + " is not an array");
    Vector v;
    v.reserve(j.size());
    for (const auto& x : j) {
        if (!x.is_number()) throw FormatError(0, what + " contains a non-number");
        const double d = x.get<double>();
        if (!std::isfinite(d)) throw ShapeError(what + " contains a non-finite value");
        v.push_back(static_cast<float>(d));
    }
    return v;
}

inline std::vector<AffineLayer> layers_from_json(const json& arr, const std::string& head) {
    if (!arr.is_array()) throw FormatError(0, "head '" + head + "' must be an array of layers");
    std::vector<AffineLayer> layers;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& lj = arr[i];
        const std::string where = head + "[" + std::to_string(i) + "]";
        if (!lj.is_object() || !lj.contains("w") || !lj.contains("b"))
            throw FormatError(0, where + " must be an object with 'w' and 'b'");
        const auto& wj = lj["w"];
        if (!wj.is_array() || wj.empty()) throw ShapeError(where + ".w must be a non-empty matrix");
        AffineLayer l;
        l.out = wj.size();
        for (std::size_t r = 0; r < wj.size(); ++r) {
            auto row = json_to_vector(wj[r], where + ".w row");
            if (r == 0) l.in = row.size();
            if (row.size() != l.in) throw ShapeError(where + ".w is ragged");
            l.weight.insert(l.weight.end(), row.begin(), row.end());
        }
        l.bias = json_to_vector(lj["b"], where + ".b");
        layers.push_back(std::move(l));
    }
    return layers;
}

inline json layers_to_json(const std::vector<AffineLayer>& layers) {
    json arr = json::array();
    for (const auto& l : layers) {
        json w = json::array();
        for (std::size_t r = 0; r < l.out; ++r)
            w.push_back(std::vector<float>(l.weight.begin() + static_cast<std::ptrdiff_t>(r * l.in),
                                           l.weight.begin() + static_cast<std::ptrdiff_t>((r + 1) * l.in)));
        arr.push_back({{"w", std::move(w)}, {"b", l.bias}});
    }
    return arr;
}

}  // namespace detail

inline HeadWeights head_weights_from_json(const json& j) {
    if (!j.is_object()) throw FormatError(0, "weights file must be a JSON object");
    HeadWeights w;
    const auto act = j.value("activation", std::string("relu"));
    auto parsed = parse_activation(act);
    if (!parsed) throw FormatError(0, "unknown activation '" + act + "'");
    w.activation = *parsed;
    if (!j.contains("f") || !j.contains("g")) throw FormatError(0, "weights need both 'f' and 'g'");
    w.f = detail::layers_from_json(j["f"], "f");
    w.g = detail::layers_from_json(j["g"], "g");
    w.validate();
    return w;
}

inline json head_weights_to_json(const HeadWeights& w) {
    return {{"activation", std::string(to_string(w.activation))},
            {"f", detail::layers_to_json(w.f)},
            {"g", detail::layers_to_json(w.g)}};
}

inline HeadWeights load_head_weights(const std::string& path) {
    json j;
    try {
        j = json::parse(util::read_file(path));
    } catch (const json::parse_error& e) {
        throw FormatError(e.byte, std::string("weights JSON: ") + e.what());
    }
    return head_weights_from_json(j);
}

inline void save_head_weights(const HeadWeights& w, const std::string& path) {
    util::write_file(path, head_weights_to_json(w).dump());
}

/// Stable fingerprint of a weight set, recorded in datastore metadata.
inline std::string weights_fingerprint(const HeadWeights& w) {
    return util::hex64(util::fnv1a64(head_weights_to_json(w).dump()));
}

/// Reads the precomputed-embeddings JSONL interchange file. All records must
/// share one dimension.
inline std::map<std::string, TheoryInputs> load_precomputed(const std::string& path) {
    std::map<std::string, TheoryInputs> out;
    std::size_t dim = 0;
    std::size_t line_no = 0;
    for (const auto& line : util::read_lines(path)) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError(line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string())
            throw FormatError(line_no, "record needs a string 'id'");
        for (const char* key : {"v_s", "v_st", "v_t"})
            if (!j.contains(key)) throw FormatError(line_no, std::string("record missing '") + key + "'");
        TheoryInputs in{detail::json_to_vector(j["v_s"], "v_s"), detail::json_to_vector(j["v_st"], "v_st"),
                        detail::json_to_vector(j["v_t"], "v_t")};
        if (dim == 0) dim = in.v_s.size();
        if (dim == 0 || in.v_s.size() != dim || in.v_st.size() != dim || in.v_t.size() != dim)
            throw ShapeError("line " + std::to_string(line_no) + ": vector dims disagree");
        const auto id = j["id"].get<std::string>();
        if (!out.emplace(id, std::move(in)).second)
            throw FormatError(line_no, "duplicate id '" + id + "'");
    }
    return out;
}

inline void write_precomputed(const std::map<std::string, TheoryInputs>& records, const std::string& path) {
    std::string out;
    for (const auto& [id, in] : records) {
        out += json{{"id", id}, {"v_s", in.v_s}, {"v_st", in.v_st}, {"v_t", in.v_t}}.dump();
        out += '\n';
    }
    util::write_file(path, out);
}

}  // namespace dmd
