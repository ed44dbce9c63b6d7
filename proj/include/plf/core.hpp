#pragma once
// Domain types shared by every stage of the pseudo-label pipeline:
// the 13-class indoor taxonomy, dense 2-D grids, depth maps, label maps
// and per-class score volumes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace plf {

enum class ErrorCode {
    BadMagic,
    TruncatedPayload,
    TrailingBytes,
    UnknownDtype,
    UnsupportedDtype,
    EmptyInput,
    DegenerateRange,
    EmptyBatch,
    ShapeMismatch,
    NonFinite,
    NonFiniteGradient,
    DivergenceDetected,
    InvalidArgument,
    InvalidProfile,
    EmptySegment,
    BadDistribution,
    AllPixelsUnknown,
    EmptyMatrix,
    PerClassRequiresGt,
    MissingCoverRatio,
    EmptyMask,
    BadSpec,
    Io,
};

inline std::string_view error_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::TruncatedPayload: return "TruncatedPayload";
        case ErrorCode::TrailingBytes: return "TrailingBytes";
        case ErrorCode::UnknownDtype: return "UnknownDtype";
        case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::DegenerateRange: return "DegenerateRange";
        case ErrorCode::EmptyBatch: return "EmptyBatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::DivergenceDetected: return "DivergenceDetected";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::InvalidProfile: return "InvalidProfile";
        case ErrorCode::EmptySegment: return "EmptySegment";
        case ErrorCode::BadDistribution: return "BadDistribution";
        case ErrorCode::AllPixelsUnknown: return "AllPixelsUnknown";
        case ErrorCode::EmptyMatrix: return "EmptyMatrix";
        case ErrorCode::PerClassRequiresGt: return "PerClassRequiresGt";
        case ErrorCode::MissingCoverRatio: return "MissingCoverRatio";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::BadSpec: return "BadSpec";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// ---------------------------------------------------------------------------
// Class taxonomy
// ---------------------------------------------------------------------------

using Label = std::uint8_t;

inline constexpr std::size_t kNumClasses = 13;
inline constexpr Label kUnknown = 255;

// Serialized ids follow this order; never reorder.
enum class Category : Label {
    bed = 0,
    books = 1,
    ceil = 2,
    chair = 3,
    floor = 4,
    furniture = 5,
    objects = 6,
    painting = 7,
    sofa = 8,
    table = 9,
    tv = 10,
    wall = 11,
    window = 12,
};

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "bed", "books", "ceil", "chair", "floor", "furniture", "objects",
    "painting", "sofa", "table", "tv", "wall", "window"};

constexpr Label id(Category c) noexcept { return static_cast<Label>(c); }

constexpr bool is_class(Label l) noexcept { return l < kNumClasses; }

inline std::string_view class_name(Label l) {
    if (l == kUnknown) return "unknown";
    if (!is_class(l)) throw Error(ErrorCode::InvalidArgument, "label " + std::to_string(l));
    return kClassNames[l];
}

inline std::optional<Label> class_from_name(std::string_view name) {
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (kClassNames[c] == name) return static_cast<Label>(c);
    }
    // Short forms used in table headers.
    if (name == "furn." || name == "furn") return id(Category::furniture);
    if (name == "objs." || name == "objs") return id(Category::objects);
    if (name == "paint") return id(Category::painting);
    return std::nullopt;
}

// Small fixed-size class set, ordered by id.
class ClassSet {
public:
    ClassSet() = default;
    ClassSet(std::initializer_list<Label> ids) {
        for (Label l : ids) insert(l);
    }

    void insert(Label l) {
        if (!is_class(l)) throw Error(ErrorCode::InvalidArgument, "not a class id");
        bits_ |= std::uint32_t{1} << l;
    }
    void erase(Label l) {
        if (is_class(l)) bits_ &= ~(std::uint32_t{1} << l);
    }
    bool contains(Label l) const noexcept {
        return is_class(l) && (bits_ >> l) & 1u;
    }
    bool empty() const noexcept { return bits_ == 0; }
    std::size_t size() const noexcept {
        std::size_t n = 0;
        for (std::size_t c = 0; c < kNumClasses; ++c) n += (bits_ >> c) & 1u;
        return n;
    }
    bool disjoint(const ClassSet& other) const noexcept { return (bits_ & other.bits_) == 0; }

    std::vector<Label> members() const {
        std::vector<Label> out;
        for (std::size_t c = 0; c < kNumClasses; ++c)
            if ((bits_ >> c) & 1u) out.push_back(static_cast<Label>(c));
        return out;
    }

    friend bool operator==(const ClassSet&, const ClassSet&) = default;

private:
    std::uint32_t bits_ = 0;
};

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

// Row-major H x W grid.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(std::size_t height, std::size_t width, T fill = T{})
        : height_(height), width_(width), data_(height * width, fill) {}
    Grid(std::size_t height, std::size_t width, std::vector<T> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != height_ * width_)
            throw Error(ErrorCode::ShapeMismatch, "grid data does not match shape");
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
    const T& operator()(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    template <typename U>
    bool same_shape(const Grid<U>& other) const noexcept {
        return height_ == other.height() && width_ == other.width();
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<T> data_;
};

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, std::string_view what) {
    if (!a.same_shape(b))
        throw Error(ErrorCode::ShapeMismatch,
                    std::string(what) + ": " + std::to_string(a.height()) + "x" +
                        std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                        std::to_string(b.width()));
}

// Per-pixel class ids; kUnknown marks abstention / unlabeled pixels.
using LabelMap = Grid<Label>;

inline void validate_labels(const LabelMap& labels) {
    for (Label l : labels.data())
        if (l != kUnknown && !is_class(l))
            throw Error(ErrorCode::InvalidArgument, "label map holds id " + std::to_string(l));
}

// Raw sensor or rendered depth in meters. Invalid pixels (holes) carry 0.
struct DepthMap {
    Grid<double> depth;
    Grid<std::uint8_t> valid;

    DepthMap() = default;
    explicit DepthMap(Grid<double> d) : depth(std::move(d)), valid(depth.height(), depth.width(), 1) {
        for (std::size_t i = 0; i < depth.size(); ++i)
            if (depth[i] == 0.0) valid[i] = 0;
    }
    DepthMap(Grid<double> d, Grid<std::uint8_t> v) : depth(std::move(d)), valid(std::move(v)) {
        require_same_shape(depth, valid, "depth map validity mask");
    }

    std::size_t height() const noexcept { return depth.height(); }
    std::size_t width() const noexcept { return depth.width(); }

    std::size_t valid_count() const noexcept {
        return static_cast<std::size_t>(std::count(valid.data().begin(), valid.data().end(), 1));
    }

    void validate() const {
        require_same_shape(depth, valid, "depth map validity mask");
        if (depth.height() == 0 || depth.width() == 0)
            throw Error(ErrorCode::EmptyInput, "depth map has zero extent");
        for (std::size_t i = 0; i < depth.size(); ++i) {
            if (valid[i] && (!std::isfinite(depth[i]) || depth[i] < 0.0))
                throw Error(ErrorCode::NonFinite, "valid depth must be finite and >= 0");
        }
    }

    friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

// Depth rescaled to [-1, 1] per image. Invalid pixels hold 0.
struct NormalizedDepthMap {
    Grid<double> values;
    Grid<std::uint8_t> valid;

    NormalizedDepthMap() = default;
    explicit NormalizedDepthMap(Grid<double> v)
        : values(std::move(v)), valid(values.height(), values.width(), 1) {}
    NormalizedDepthMap(Grid<double> v, Grid<std::uint8_t> m) : values(std::move(v)), valid(std::move(m)) {
        require_same_shape(values, valid, "normalized depth validity mask");
    }

    std::size_t height() const noexcept { return values.height(); }
    std::size_t width() const noexcept { return values.width(); }

    friend bool operator==(const NormalizedDepthMap&, const NormalizedDepthMap&) = default;
};

// Channel-major C x H x W volume of per-class scores (logits, probabilities or
// class activations).
class ScoreVolume {
public:
    ScoreVolume() = default;
    ScoreVolume(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
        : channels_(channels), height_(height), width_(width), data_(channels * height * width, fill) {}
    ScoreVolume(std::size_t channels, std::size_t height, std::size_t width, std::vector<double> data)
        : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != channels_ * height_ * width_)
            throw Error(ErrorCode::ShapeMismatch, "score volume data does not match shape");
    }

    std::size_t channels() const noexcept { return channels_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t pixels() const noexcept { return height_ * width_; }

    double& operator()(std::size_t c, std::size_t row, std::size_t col) {
        return data_[(c * height_ + row) * width_ + col];
    }
    double operator()(std::size_t c, std::size_t row, std::size_t col) const {
        return data_[(c * height_ + row) * width_ + col];
    }
    // Channel c at flat pixel index i.
    double& at(std::size_t c, std::size_t i) { return data_[c * height_ * width_ + i]; }
    double at(std::size_t c, std::size_t i) const { return data_[c * height_ * width_ + i]; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    template <typename U>
    bool same_plane(const Grid<U>& g) const noexcept {
        return height_ == g.height() && width_ == g.width();
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    // Checks the probability-simplex invariant per pixel.
    bool is_probability(double tol = 1e-6) const noexcept {
        for (std::size_t i = 0; i < pixels(); ++i) {
            double sum = 0.0;
            for (std::size_t c = 0; c < channels_; ++c) {
                const double v = at(c, i);
                if (!(v >= 0.0)) return false;
                sum += v;
            }
            if (std::abs(sum - 1.0) > tol) return false;
        }
        return true;
    }

    friend bool operator==(const ScoreVolume&, const ScoreVolume&) = default;

private:
    std::size_t channels_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

template <typename U>
void require_same_plane(const ScoreVolume& v, const Grid<U>& g, std::string_view what) {
    if (!v.same_plane(g))
        throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": volume plane " +
                                                  std::to_string(v.height()) + "x" +
                                                  std::to_string(v.width()) + " vs grid " +
                                                  std::to_string(g.height()) + "x" +
                                                  std::to_string(g.width()));
}

inline void require_class_channels(const ScoreVolume& v, std::string_view what) {
    if (v.channels() != kNumClasses)
        throw Error(ErrorCode::ShapeMismatch, std::string(what) + " needs " +
                                                  std::to_string(kNumClasses) + " channels, got " +
                                                  std::to_string(v.channels()));
}

}  // namespace plf
