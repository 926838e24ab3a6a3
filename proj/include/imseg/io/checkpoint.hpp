#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "imseg/core/errors.hpp"
#include "imseg/io/config_json.hpp"
#include "imseg/model.hpp"

namespace imseg {

/// Binary layout, all integers little-endian:
///   "IMSK" | u16 version | u32 config length | config JSON bytes
///   | u32 tensor count | per tensor: u32 name length, name bytes, u8 dtype
///   (1 = f32, 2 = f64), u8 rank, rank × u64 extents, raw values
///   | u32 CRC-32 of every preceding byte
inline constexpr char kCheckpointMagic[4] = {'I', 'M', 'S', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct StoredTensor {
    std::string name;
    std::uint8_t dtype = 1;
    Shape shape;
    std::vector<double> values; // widened for inspection
    std::vector<std::uint8_t> raw;
};

struct CheckpointData {
    ModelConfig model;
    nlohmann::json meta; // full config blob, including "model" and any extras
    std::uint64_t seed = 0;
    std::vector<StoredTensor> tensors;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    return static_cast<std::uint32_t>(
        ::crc32(::crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

namespace detail {

class ByteWriter {
  public:
    template <class U>
    void put(U v) {
        static_assert(std::is_trivially_copyable_v<U>);
        std::uint8_t b[sizeof(U)];
        std::memcpy(b, &v, sizeof(U));
        if constexpr (std::endian::native == std::endian::big)
            std::reverse(b, b + sizeof(U));
        out.insert(out.end(), b, b + sizeof(U));
    }
    void put_bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), c, c + n);
    }
    std::vector<std::uint8_t> out;
};

class ByteReader {
  public:
    explicit ByteReader(std::span<const std::uint8_t> b) : bytes_(b) {}
    template <class U>
    U get(const char* what) {
        need(sizeof(U), what);
        std::uint8_t b[sizeof(U)];
        std::memcpy(b, bytes_.data() + pos_, sizeof(U));
        if constexpr (std::endian::native == std::endian::big)
            std::reverse(b, b + sizeof(U));
        pos_ += sizeof(U);
        U v;
        std::memcpy(&v, b, sizeof(U));
        return v;
    }
    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }

  private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n)
            throw FormatError(std::string("checkpoint truncated reading ") + what + " at byte " + std::to_string(pos_));
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

template <class T>
std::vector<std::uint8_t> serialize_checkpoint(const Segmenter<T>& model, std::uint64_t seed,
                                               const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json meta = extra;
    meta["encoder"] = to_json(model.config().encoder);
    meta["decoder"] = to_json(model.config().decoder);
    meta["seed"] = seed;
    const std::string blob = meta.dump();

    detail::ByteWriter w;
    w.put_bytes(kCheckpointMagic, 4);
    w.put(kCheckpointVersion);
    w.put(static_cast<std::uint32_t>(blob.size()));
    w.put_bytes(blob.data(), blob.size());
    w.put(static_cast<std::uint32_t>(model.parameters().size()));
    for (const auto& p : model.parameters()) {
        w.put(static_cast<std::uint32_t>(p.name.size()));
        w.put_bytes(p.name.data(), p.name.size());
        w.put(static_cast<std::uint8_t>(std::is_same_v<T, float> ? 1 : 2));
        w.put(static_cast<std::uint8_t>(p.tensor.rank()));
        for (auto e : p.tensor.shape())
            w.put(static_cast<std::uint64_t>(e));
        for (T v : p.tensor.data())
            w.put(v);
    }
    w.put(crc32_of(w.out));
    return std::move(w.out);
}

/// Parses and verifies a checkpoint; any corruption raises FormatError.
inline CheckpointData parse_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 + 2 + 4 + 4 + 4)
        throw FormatError("checkpoint too short (" + std::to_string(bytes.size()) + " bytes)");
    const auto body = bytes.first(bytes.size() - 4);
    detail::ByteReader tail(bytes.last(4));
    const auto stored_crc = tail.get<std::uint32_t>("crc");
    if (crc32_of(body) != stored_crc)
        throw FormatError("checkpoint CRC mismatch");
    detail::ByteReader r(body);
    const auto magic = r.take(4, "magic");
    if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0)
        throw FormatError("bad checkpoint magic at byte 0");
    const auto version = r.get<std::uint16_t>("version");
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto blob_len = r.get<std::uint32_t>("config length");
    const auto blob = r.take(blob_len, "config");
    CheckpointData ck;
    try {
        ck.meta = nlohmann::json::parse(blob.begin(), blob.end());
        ck.model.encoder = encoder_config_from_json(ck.meta.at("encoder"));
        ck.model.decoder = decoder_config_from_json(ck.meta.at("decoder"));
        ck.seed = ck.meta.at("seed");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint config: ") + e.what());
    }
    const auto count = r.get<std::uint32_t>("tensor count");
    for (std::uint32_t k = 0; k < count; ++k) {
        StoredTensor t;
        const auto name_len = r.get<std::uint32_t>("name length");
        const auto name = r.take(name_len, "name");
        t.name.assign(name.begin(), name.end());
        t.dtype = r.get<std::uint8_t>("dtype");
        if (t.dtype != 1 && t.dtype != 2)
            throw FormatError("tensor " + t.name + ": unknown dtype tag " + std::to_string(t.dtype) + " at byte " +
                              std::to_string(r.pos() - 1));
        const auto rank = r.get<std::uint8_t>("rank");
        for (std::uint8_t d = 0; d < rank; ++d)
            t.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("extent")));
        const std::size_t n = shape_size(t.shape);
        t.values.reserve(n);
        const std::size_t start = r.pos();
        for (std::size_t i = 0; i < n; ++i)
            t.values.push_back(t.dtype == 1 ? static_cast<double>(r.get<float>("values")) : r.get<double>("values"));
        const auto raw = body.subspan(start, r.pos() - start);
        t.raw.assign(raw.begin(), raw.end());
        ck.tensors.push_back(std::move(t));
    }
    if (r.pos() != body.size())
        throw FormatError("trailing bytes after tensor table at byte " + std::to_string(r.pos()));
    return ck;
}

/// Copies stored values into a model built from the same configuration.
template <class T>
void apply_checkpoint(Segmenter<T>& model, const CheckpointData& ck) {
    auto& params = model.parameters();
    if (params.size() != ck.tensors.size())
        throw FormatError("checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& st = ck.tensors[i];
        if (st.name != params[i].name || st.shape != params[i].tensor.shape())
            throw FormatError("checkpoint tensor " + st.name + " " + shape_str(st.shape) + " does not match " +
                              params[i].name + " " + shape_str(params[i].tensor.shape()));
        auto dst = params[i].tensor.mutable_data();
        for (std::size_t k = 0; k < dst.size(); ++k)
            dst[k] = static_cast<T>(st.values[k]);
    }
}

template <class T>
Segmenter<T> model_from_checkpoint(const CheckpointData& ck) {
    Segmenter<T> model(ck.model, ck.seed);
    apply_checkpoint(model, ck);
    return model;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& p, std::span<const std::uint8_t> bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw DataError("cannot write " + p.string());
}

template <class T>
void save_checkpoint(const std::filesystem::path& p, const Segmenter<T>& model, std::uint64_t seed,
                     const nlohmann::json& extra = nlohmann::json::object()) {
    write_file_bytes(p, serialize_checkpoint(model, seed, extra));
}

inline CheckpointData load_checkpoint(const std::filesystem::path& p) { return parse_checkpoint(read_file_bytes(p)); }

} // namespace imseg
