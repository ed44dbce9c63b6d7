#pragma once
// Binary tensor container ("PLF1"):
//
//   offset 0  : magic "PLF1"
//   offset 4  : dtype code (u8=1, u16=2, f32=3, f64=4), one byte
//   offset 5  : rank, one byte
//   offset 6  : rank x u32 little-endian dimensions
//   then      : row-major little-endian payload, product(shape) elements
//
// Every multi-byte quantity is little-endian regardless of host order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "plf/core.hpp"

namespace plf {

enum class DType : std::uint8_t { u8 = 1, u16 = 2, f32 = 3, f64 = 4 };

inline constexpr std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::u8: return 1;
        case DType::u16: return 2;
        case DType::f32: return 4;
        case DType::f64: return 8;
    }
    return 0;
}

inline constexpr bool is_known_dtype(std::uint8_t code) { return code >= 1 && code <= 4; }

template <typename T> struct dtype_of;
template <> struct dtype_of<std::uint8_t> { static constexpr DType value = DType::u8; };
template <> struct dtype_of<std::uint16_t> { static constexpr DType value = DType::u16; };
template <> struct dtype_of<float> { static constexpr DType value = DType::f32; };
template <> struct dtype_of<double> { static constexpr DType value = DType::f64; };

inline constexpr std::uint8_t kMaxRank = 255;

struct Tensor {
    using Storage = std::variant<std::vector<std::uint8_t>, std::vector<std::uint16_t>,
                                 std::vector<float>, std::vector<double>>;

    std::vector<std::uint32_t> shape;
    Storage data;

    DType dtype() const {
        return std::visit([](const auto& v) { return dtype_of<typename std::decay_t<decltype(v)>::value_type>::value; },
                          data);
    }

    std::size_t element_count() const {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }

    std::size_t rank() const noexcept { return shape.size(); }

    template <typename T>
    const std::vector<T>& as() const {
        if (const auto* v = std::get_if<std::vector<T>>(&data)) return *v;
        throw Error(ErrorCode::UnsupportedDtype, "tensor dtype does not match the requested element type");
    }

    // Values widened to double regardless of storage type.
    std::vector<double> to_double() const {
        return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, data);
    }

    template <typename T>
    static Tensor make(std::vector<std::uint32_t> shape, std::vector<T> values) {
        Tensor t{std::move(shape), std::move(values)};
        if (t.element_count() != std::get<std::vector<T>>(t.data).size())
            throw Error(ErrorCode::ShapeMismatch, "tensor values do not match shape");
        return t;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

namespace detail {

template <typename U>
U byteswap_if_big(U v) {
    if constexpr (std::endian::native == std::endian::little || sizeof(U) == 1) {
        return v;
    } else {
        U out = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) out = (out << 8) | ((v >> (8 * i)) & 0xFF);
        return out;
    }
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    U bits = byteswap_if_big(std::bit_cast<U>(value));
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T get(std::span<const std::uint8_t> in, std::size_t offset) {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(U{in[offset + i]} << (8 * i));
    return std::bit_cast<T>(bits);
}

}  // namespace detail

inline constexpr char kTensorMagic[4] = {'P', 'L', 'F', '1'};

inline std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
    if (t.shape.size() > kMaxRank) throw Error(ErrorCode::InvalidArgument, "rank exceeds 255");
    std::vector<std::uint8_t> out;
    out.reserve(6 + 4 * t.shape.size() + t.element_count() * dtype_size(t.dtype()));
    out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
    out.push_back(static_cast<std::uint8_t>(t.dtype()));
    out.push_back(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) detail::put(out, d);
    std::visit(
        [&](const auto& values) {
            if (values.size() != t.element_count())
                throw Error(ErrorCode::ShapeMismatch, "tensor values do not match shape");
            for (auto v : values) detail::put(out, v);
        },
        t.data);
    return out;
}

inline Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kTensorMagic, 4) != 0)
        throw Error(ErrorCode::BadMagic, "missing PLF1 magic");
    if (bytes.size() < 6) throw Error(ErrorCode::TruncatedPayload, "header shorter than 6 bytes");
    const std::uint8_t code = bytes[4];
    if (!is_known_dtype(code)) throw Error(ErrorCode::UnknownDtype, "dtype code " + std::to_string(code));
    const auto dtype = static_cast<DType>(code);
    const std::size_t rank = bytes[5];
    std::size_t offset = 6;
    if (bytes.size() < offset + 4 * rank) throw Error(ErrorCode::TruncatedPayload, "shape truncated");

    Tensor t;
    t.shape.resize(rank);
    for (std::size_t i = 0; i < rank; ++i, offset += 4) t.shape[i] = detail::get<std::uint32_t>(bytes, offset);

    const std::size_t n = t.element_count();
    const std::size_t need = n * dtype_size(dtype);
    if (bytes.size() - offset < need)
        throw Error(ErrorCode::TruncatedPayload, "payload has " + std::to_string(bytes.size() - offset) +
                                                     " bytes, expected " + std::to_string(need));
    if (bytes.size() - offset > need) throw Error(ErrorCode::TrailingBytes, "bytes after payload");

    auto read = [&]<typename T>(std::vector<T>& values) {
        values.resize(n);
        for (std::size_t i = 0; i < n; ++i, offset += sizeof(T)) values[i] = detail::get<T>(bytes, offset);
    };
    switch (dtype) {
        case DType::u8: { std::vector<std::uint8_t> v; read(v); t.data = std::move(v); break; }
        case DType::u16: { std::vector<std::uint16_t> v; read(v); t.data = std::move(v); break; }
        case DType::f32: { std::vector<float> v; read(v); t.data = std::move(v); break; }
        case DType::f64: { std::vector<double> v; read(v); t.data = std::move(v); break; }
    }
    return t;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

inline Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file_bytes(path)); }

inline void write_tensor(const std::filesystem::path& path, const Tensor& t) {
    write_file_bytes(path, encode_tensor(t));
}

// ---------------------------------------------------------------------------
// Conversions between tensors and domain types
// ---------------------------------------------------------------------------

template <typename T>
Tensor grid_tensor(const Grid<T>& g) {
    return Tensor::make<T>({static_cast<std::uint32_t>(g.height()), static_cast<std::uint32_t>(g.width())},
                           g.data());
}

inline Tensor grid_tensor_f32(const Grid<double>& g) {
    return Tensor::make<float>({static_cast<std::uint32_t>(g.height()), static_cast<std::uint32_t>(g.width())},
                               std::vector<float>(g.data().begin(), g.data().end()));
}

inline void require_rank(const Tensor& t, std::size_t rank, std::string_view what) {
    if (t.rank() != rank)
        throw Error(ErrorCode::ShapeMismatch, std::string(what) + " expects rank " + std::to_string(rank) +
                                                  ", got " + std::to_string(t.rank()));
}

inline Grid<double> tensor_to_grid(const Tensor& t) {
    require_rank(t, 2, "grid");
    return Grid<double>(t.shape[0], t.shape[1], t.to_double());
}

inline LabelMap tensor_to_labels(const Tensor& t) {
    require_rank(t, 2, "label map");
    LabelMap m(t.shape[0], t.shape[1], t.as<std::uint8_t>());
    validate_labels(m);
    return m;
}

// Volumes are stored C x H x W, f32 unless asked otherwise.
inline Tensor volume_tensor(const ScoreVolume& v, DType dtype = DType::f32) {
    std::vector<std::uint32_t> shape{static_cast<std::uint32_t>(v.channels()),
                                     static_cast<std::uint32_t>(v.height()),
                                     static_cast<std::uint32_t>(v.width())};
    if (dtype == DType::f64) return Tensor::make<double>(std::move(shape), v.data());
    if (dtype == DType::f32)
        return Tensor::make<float>(std::move(shape), std::vector<float>(v.data().begin(), v.data().end()));
    throw Error(ErrorCode::UnsupportedDtype, "score volumes are stored as f32 or f64");
}

inline ScoreVolume tensor_to_volume(const Tensor& t) {
    require_rank(t, 3, "score volume");
    return ScoreVolume(t.shape[0], t.shape[1], t.shape[2], t.to_double());
}

// Depth tensors store meters with 0 marking invalid pixels.
inline DepthMap tensor_to_depth(const Tensor& t) {
    DepthMap d(tensor_to_grid(t));
    d.validate();
    return d;
}

inline Tensor depth_tensor(const DepthMap& d) {
    Grid<double> g = d.depth;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!d.valid[i]) g[i] = 0.0;
    return grid_tensor(g);
}

}  // namespace plf
