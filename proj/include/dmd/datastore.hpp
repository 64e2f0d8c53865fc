#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dmd/core.hpp"
#include "dmd/error.hpp"
#include "dmd/features.hpp"

namespace dmd {

/// Key/value store of theory vectors and the samples they were computed
/// from. Rows of `keys` align with `values`. Immutable once built.
///
/// On-disk container (little-endian):
///
///     "DMD1" | version u32 | dim u32 | count u64
///     keys: count*dim f32, row-major
///     metadata: u32 byte length + UTF-8 JSON object of strings
///     values: count * (u32 byte length + UTF-8 JSON sample)
class Datastore {
public:
    static constexpr std::uint32_t kVersion = 1;
    static constexpr char kMagic[4] = {'D', 'M', 'D', '1'};

    Datastore() = default;
    Datastore(std::size_t dim, std::vector<float> keys, std::vector<Sample> values,
              std::map<std::string, std::string> metadata)
        : dim_(dim), keys_(std::move(keys)), values_(std::move(values)), metadata_(std::move(metadata)) {
        if (dim_ == 0 ? !keys_.empty() : keys_.size() != dim_ * values_.size())
            throw ShapeError("key matrix does not match dim*count");
        for (float v : keys_)
            if (!std::isfinite(v)) throw ShapeError("datastore key is not finite");
    }

    /// 0 only for an empty store built without a dimension hint.
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    std::span<const float> key(std::size_t row) const {
        return {keys_.data() + row * dim_, dim_};
    }
    const std::vector<float>& keys() const noexcept { return keys_; }
    const std::vector<Sample>& values() const noexcept { return values_; }
    const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

private:
    std::size_t dim_ = 0;
    std::vector<float> keys_;
    std::vector<Sample> values_;
    std::map<std::string, std::string> metadata_;
};

struct Neighbor {
    std::size_t index = 0;
    float distance = 0.0f;
    Sample sample;
};

/// Row-major squared L2 with sequential 32-bit accumulation.
inline float squared_l2(std::span<const float> a, std::span<const float> b) {
    float acc = 0.0f;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const float d = a[j] - b[j];
        acc += d * d;
    }
    return acc;
}

/// Builds a store, preserving pair order. `metadata` is copied in verbatim
/// plus `count` and `dim` entries.
inline Datastore build_datastore(const std::vector<std::pair<TheoryVector, Sample>>& pairs,
                                 std::map<std::string, std::string> metadata = {}) {
    std::size_t dim = pairs.empty() ? 0 : pairs.front().first.h_t.size();
    if (!pairs.empty() && dim == 0) throw DimMismatch(1, 0);
    std::vector<float> keys;
    keys.reserve(dim * pairs.size());
    std::vector<Sample> values;
    values.reserve(pairs.size());
    for (const auto& [tv, s] : pairs) {
        if (tv.h_t.size() != dim) throw DimMismatch(dim, tv.h_t.size());
        keys.insert(keys.end(), tv.h_t.begin(), tv.h_t.end());
        values.push_back(s);
    }
    metadata["count"] = std::to_string(values.size());
    metadata["dim"] = std::to_string(dim);
    return Datastore(dim, std::move(keys), std::move(values), std::move(metadata));
}

/// Exact top-k by squared L2, ascending; ties go to the lower row index.
/// Returns min(k, size) neighbors; an empty store yields an empty list.
inline std::vector<Neighbor> query_knn(const Datastore& store, std::span<const float> query, std::size_t k) {
    if (k == 0) throw PreconditionError("k must be >= 1");
    if (store.empty()) return {};
    if (query.size() != store.dim()) throw DimMismatch(store.dim(), query.size());

    const std::size_t n = store.size();
    std::vector<float> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = squared_l2(query, store.key(i));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t take = std::min(k, n);
    auto closer = [&](std::size_t a, std::size_t b) {
        return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), closer);

    std::vector<Neighbor> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
        out.push_back(Neighbor{order[i], dist[order[i]], store.values()[order[i]]});
    return out;
}

// ---- container I/O -----------------------------------------------------------

namespace detail {

class ByteWriter {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const char*>(p);
        buf_.append(c, n);
    }
    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 8);
    }
    void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
    void blob(std::string_view s) {
        if (s.size() > UINT32_MAX) throw FormatError(buf_.size(), "record too large");
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    std::uint64_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

    std::string_view bytes(std::size_t n, const char* what) {
        if (remaining() < n)
            throw FormatError(pos_, std::string("truncated ") + what + ": need " + std::to_string(n) +
                                        " bytes, have " + std::to_string(remaining()));
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint32_t u32(const char* what) {
        auto s = bytes(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
        return v;
    }
    std::uint64_t u64(const char* what) {
        auto s = bytes(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
        return v;
    }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_datastore(const Datastore& store) {
    detail::ByteWriter w;
    w.bytes(Datastore::kMagic, 4);
    w.u32(Datastore::kVersion);
    w.u32(static_cast<std::uint32_t>(store.dim()));
    w.u64(store.size());
    for (float f : store.keys()) w.f32(f);
    json meta(store.metadata());
    w.blob(meta.dump());
    for (const auto& s : store.values()) w.blob(sample_to_json(s).dump());
    return w.take();
}

inline Datastore deserialize_datastore(std::string_view data) {
    detail::ByteReader r(data);
    auto magic = r.bytes(4, "magic");
    if (std::memcmp(magic.data(), Datastore::kMagic, 4) != 0)
        throw FormatError(0, "bad magic bytes (expected \"DMD1\")");
    const auto version = r.u32("version");
    if (version != Datastore::kVersion) throw VersionError(version, Datastore::kVersion);
    const auto dim_off = r.offset();
    const std::size_t dim = r.u32("dim");
    const auto count_off = r.offset();
    const std::uint64_t count = r.u64("count");
    if (dim == 0 && count != 0) throw FormatError(dim_off, "dim is 0 for a non-empty store");
    // Every row needs dim*4 key bytes plus a 4-byte value header.
    if (count > r.remaining() / (static_cast<std::uint64_t>(dim) * 4 + 4))
        throw FormatError(count_off, "count " + std::to_string(count) + " exceeds file size");

    std::vector<float> keys(dim * count);
    for (auto& f : keys) {
        const auto off = r.offset();
        std::uint32_t bits = r.u32("keys");
        f = std::bit_cast<float>(bits);
        if (!std::isfinite(f)) throw FormatError(off, "non-finite key value");
    }

    const auto meta_off = r.offset();
    const auto meta_len = r.u32("metadata length");
    auto meta_text = r.bytes(meta_len, "metadata");
    std::map<std::string, std::string> metadata;
    try {
        auto mj = json::parse(meta_text);
        if (!mj.is_object()) throw FormatError(meta_off, "metadata is not a JSON object");
        for (auto it = mj.begin(); it != mj.end(); ++it) {
            if (!it.value().is_string()) throw FormatError(meta_off, "metadata value is not a string");
            metadata[it.key()] = it.value().get<std::string>();
        }
    } catch (const json::exception& e) {
        throw FormatError(meta_off, std::string("metadata JSON: ") + e.what());
    }

    std::vector<Sample> values;
    values.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto off = r.offset();
        const auto len = r.u32("value length");
        auto text = r.bytes(len, "value");
        try {
            values.push_back(sample_from_json(json::parse(text)));
        } catch (const json::exception& e) {
            throw FormatError(off, "value " + std::to_string(i) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError(off, "value " + std::to_string(i) + ": " + e.what());
        }
    }
    if (r.remaining() != 0) throw FormatError(r.offset(), "trailing bytes after last value");
    return Datastore(dim, std::move(keys), std::move(values), std::move(metadata));
}

inline void save_datastore(const Datastore& store, const std::string& path) {
    util::write_file(path, serialize_datastore(store));
}

inline Datastore load_datastore(const std::string& path) {
    return deserialize_datastore(util::read_file(path));
}

}  // namespace dmd
