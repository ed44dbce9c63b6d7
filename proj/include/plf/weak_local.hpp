#pragma once
// Weak localization head: 2x2 max pool -> global average pool -> linear,
// and class activation maps projected through the same linear weights.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "plf/core.hpp"

namespace plf::weak {

// d x h x w feature maps from the last convolutional layer.
class FeatureVolume {
public:
    FeatureVolume() = default;
    FeatureVolume(std::size_t depth, std::size_t height, std::size_t width, std::vector<double> data)
        : depth_(depth), height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != depth_ * height_ * width_)
            throw Error(ErrorCode::ShapeMismatch, "feature data does not match shape");
        if (height_ < 2 || width_ < 2) throw Error(ErrorCode::ShapeMismatch, "feature grid must be at least 2x2");
    }

    std::size_t depth() const noexcept { return depth_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }

    double operator()(std::size_t d, std::size_t r, std::size_t c) const {
        return data_[(d * height_ + r) * width_ + c];
    }
    const std::vector<double>& data() const noexcept { return data_; }

private:
    std::size_t depth_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

// C x d class weights (row-major) and a bias per class.
struct HeadWeights {
    std::size_t classes = 0;
    std::size_t depth = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    double w(std::size_t c, std::size_t d) const { return weights[c * depth + d]; }

    void validate() const {
        if (weights.size() != classes * depth || bias.size() != classes)
            throw Error(ErrorCode::ShapeMismatch, "head weights do not match C x d");
        for (double v : weights)
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "head weight");
        for (double v : bias)
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "head bias");
    }
};

// Stride-2 2x2 max pool followed by the spatial mean, per channel. Odd
// trailing rows/columns are dropped.
inline std::vector<double> pooled_descriptor(const FeatureVolume& f) {
    const std::size_t ph = f.height() / 2;
    const std::size_t pw = f.width() / 2;
    std::vector<double> g(f.depth(), 0.0);
    for (std::size_t d = 0; d < f.depth(); ++d) {
        double sum = 0.0;
        for (std::size_t r = 0; r < ph; ++r) {
            for (std::size_t c = 0; c < pw; ++c) {
                const double m = std::max(std::max(f(d, 2 * r, 2 * c), f(d, 2 * r, 2 * c + 1)),
                                          std::max(f(d, 2 * r + 1, 2 * c), f(d, 2 * r + 1, 2 * c + 1)));
                sum += m;
            }
        }
        g[d] = sum / static_cast<double>(ph * pw);
    }
    return g;
}

inline std::vector<double> head_forward(const FeatureVolume& f, const HeadWeights& w) {
    w.validate();
    if (w.depth != f.depth()) throw Error(ErrorCode::ShapeMismatch, "head depth differs from feature depth");
    const auto g = pooled_descriptor(f);
    std::vector<double> scores(w.classes);
    for (std::size_t c = 0; c < w.classes; ++c) {
        double s = w.bias[c];
        for (std::size_t d = 0; d < w.depth; ++d) s += w.w(c, d) * g[d];
        scores[c] = s;
    }
    return scores;
}

// Bilinear resize with half-pixel centers; source coordinates are clamped to
// the grid so borders replicate.
inline Grid<double> resize_bilinear(const Grid<double>& src, std::size_t out_h, std::size_t out_w) {
    Grid<double> out(out_h, out_w);
    const double sy = static_cast<double>(src.height()) / static_cast<double>(out_h);
    const double sx = static_cast<double>(src.width()) / static_cast<double>(out_w);
    const double max_y = static_cast<double>(src.height() - 1);
    const double max_x = static_cast<double>(src.width() - 1);
    for (std::size_t r = 0; r < out_h; ++r) {
        const double y = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, max_y);
        const auto y0 = static_cast<std::size_t>(std::floor(y));
        const std::size_t y1 = std::min(y0 + 1, src.height() - 1);
        const double fy = y - static_cast<double>(y0);
        for (std::size_t c = 0; c < out_w; ++c) {
            const double x = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, max_x);
            const auto x0 = static_cast<std::size_t>(std::floor(x));
            const std::size_t x1 = std::min(x0 + 1, src.width() - 1);
            const double fx = x - static_cast<double>(x0);
            const double top = src(y0, x0) + fx * (src(y0, x1) - src(y0, x0));
            const double bottom = src(y1, x0) + fx * (src(y1, x1) - src(y1, x0));
            out(r, c) = top + fy * (bottom - top);
        }
    }
    return out;
}

// Raw class activation M_c(y, x) = sum_d w_{c,d} f_d(y, x) on the feature grid.
inline Grid<double> activation_map(const FeatureVolume& f, const HeadWeights& w, std::size_t c) {
    Grid<double> m(f.height(), f.width(), 0.0);
    for (std::size_t d = 0; d < f.depth(); ++d) {
        const double wc = w.w(c, d);
        for (std::size_t r = 0; r < f.height(); ++r)
            for (std::size_t x = 0; x < f.width(); ++x) m(r, x) += wc * f(d, r, x);
    }
    return m;
}

// Per-class min-max rescale to [0, 1]; constant maps become all zeros.
inline void normalize_unit(Grid<double>& m) {
    const auto [lo, hi] = std::minmax_element(m.data().begin(), m.data().end());
    const double a = *lo;
    const double b = *hi;
    if (!(b > a)) {
        std::fill(m.data().begin(), m.data().end(), 0.0);
        return;
    }
    for (double& v : m.data()) v = std::clamp((v - a) / (b - a), 0.0, 1.0);
}

inline ScoreVolume compute_cam(const FeatureVolume& f, const HeadWeights& w, std::size_t out_h, std::size_t out_w) {
    w.validate();
    if (w.depth != f.depth()) throw Error(ErrorCode::ShapeMismatch, "head depth differs from feature depth");
    if (out_h < f.height() || out_w < f.width())
        throw Error(ErrorCode::ShapeMismatch, "CAM output must not be smaller than the feature grid");
    ScoreVolume cam(w.classes, out_h, out_w, 0.0);
    for (std::size_t c = 0; c < w.classes; ++c) {
        const Grid<double> coarse = activation_map(f, w, c);
        const auto [lo, hi] = std::minmax_element(coarse.data().begin(), coarse.data().end());
        if (!(*hi > *lo)) continue;  // constant channel stays zero
        Grid<double> fine = resize_bilinear(coarse, out_h, out_w);
        normalize_unit(fine);
        std::copy(fine.data().begin(), fine.data().end(), cam.data().begin() + static_cast<std::ptrdiff_t>(c * out_h * out_w));
    }
    return cam;
}

}  // namespace plf::weak
