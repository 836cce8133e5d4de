#include "gpd/numkit/network.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include <Eigen/Core>

#include "gpd/errors.hpp"
#include "gpd/rng.hpp"

namespace gpd::numkit {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Map = Eigen::Map<RowMat<T>>;
template <class T>
using CMap = Eigen::Map<const RowMat<T>>;

template <class T>
void apply_activation(Activation act, std::span<T> v) {
    switch (act) {
        case Activation::relu:
            for (T& x : v) x = x < T(0) ? T(0) : x;  // NaN passes through
            break;
        case Activation::softplus:
            for (T& x : v) x = std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
            break;
        case Activation::linear:
            break;
    }
}

// Multiplies grad in place by the activation derivative expressed through
// the activation output y.
template <class T>
void apply_activation_grad(Activation act, std::span<const T> y, std::span<T> grad) {
    switch (act) {
        case Activation::relu:
            for (std::size_t i = 0; i < y.size(); ++i)
                if (!(y[i] > T(0))) grad[i] = T(0);
            break;
        case Activation::softplus:
            for (std::size_t i = 0; i < y.size(); ++i) grad[i] *= -std::expm1(-y[i]);
            break;
        case Activation::linear:
            break;
    }
}

struct ConvGeometry {
    Shape image;        // the "input" side of a forward convolution
    std::size_t out_h;  // the "output" grid of a forward convolution
    std::size_t out_w;
    std::size_t kernel;
    std::size_t stride;
    std::size_t padding;

    std::size_t patch_rows() const { return image.c * kernel * kernel; }
    std::size_t grid() const { return out_h * out_w; }
};

// col is (C*K*K) x (n * out_h * out_w), row-major; column index = b*grid + pixel.
template <class T>
void im2col(const T* x, std::size_t n, const ConvGeometry& g, T* col) {
    const std::size_t grid = g.grid();
    const std::size_t ncols = n * grid;
    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(g.image.h);
    const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(g.image.w);
    for (std::size_t c = 0; c < g.image.c; ++c) {
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                T* dst = col + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
                for (std::size_t b = 0; b < n; ++b) {
                    const T* src = x + b * g.image.size() + c * g.image.h * g.image.w;
                    T* d = dst + b * grid;
                    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                                  static_cast<std::ptrdiff_t>(g.padding);
                        T* drow = d + oy * g.out_w;
                        if (iy < 0 || iy >= h) {
                            std::fill(drow, drow + g.out_w, T(0));
                            continue;
                        }
                        const T* srow = src + iy * w;
                        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                                      static_cast<std::ptrdiff_t>(g.padding);
                            drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add columns back into x (x must be zeroed).
template <class T>
void col2im(const T* col, std::size_t n, const ConvGeometry& g, T* x) {
    const std::size_t grid = g.grid();
    const std::size_t ncols = n * grid;
    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(g.image.h);
    const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(g.image.w);
    for (std::size_t c = 0; c < g.image.c; ++c) {
        for (std::size_t ki = 0; ki < g.kernel; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                const T* srcrow = col + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
                for (std::size_t b = 0; b < n; ++b) {
                    T* dst = x + b * g.image.size() + c * g.image.h * g.image.w;
                    const T* s = srcrow + b * grid;
                    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                                  static_cast<std::ptrdiff_t>(g.padding);
                        if (iy < 0 || iy >= h) continue;
                        T* drow = dst + iy * w;
                        const T* srow = s + oy * g.out_w;
                        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                                      static_cast<std::ptrdiff_t>(g.padding);
                            if (ix >= 0 && ix < w) drow[ix] += srow[ox];
                        }
                    }
                }
            }
        }
    }
}

// Sample-major (n, C, P) <-> channel-major (C, n*P).
template <class T>
void to_channel_major(const T* x, std::size_t n, std::size_t c, std::size_t p, T* out) {
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            std::memcpy(out + ch * n * p + b * p, x + (b * c + ch) * p, p * sizeof(T));
}

template <class T>
void to_sample_major(const T* x, std::size_t n, std::size_t c, std::size_t p, T* out) {
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            std::memcpy(out + (b * c + ch) * p, x + ch * n * p + b * p, p * sizeof(T));
}

std::string layer_name(std::size_t i, const LayerSpec& l) {
    const char* kind = std::visit(
        [](const auto& v) -> const char* {
            using L = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<L, Dense>) return "dense";
            else if constexpr (std::is_same_v<L, Conv2d>) return "conv2d";
            else if constexpr (std::is_same_v<L, Conv2dTranspose>) return "conv2d_transpose";
            else return "reshape";
        },
        l);
    return "layer" + std::to_string(i) + "." + kind;
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (in + 2 * padding < kernel) throw ArgumentError("convolution kernel larger than padded input");
    return (in + 2 * padding - kernel) / stride + 1;
}

std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding,
                                       std::size_t output_padding) {
    const std::size_t grown = (in - 1) * stride + kernel + output_padding;
    if (grown < 2 * padding) throw ArgumentError("transposed convolution padding exceeds output");
    return grown - 2 * padding;
}

const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::softplus: return "softplus";
        case Activation::linear: return "linear";
    }
    return "linear";
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "softplus") return Activation::softplus;
    if (s == "linear") return Activation::linear;
    throw ArgumentError("unknown activation '" + s + "'");
}

template <class T>
Network<T>::Network(NetworkSpec spec) : spec_(std::move(spec)) {
    if (spec_.input.size() == 0) throw ArgumentError("network input shape is empty");
    shapes_.push_back(spec_.input);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const Shape in = shapes_.back();
        LayerLayout lay;
        lay.in = in;
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Dense>) {
                    if (l.in != in.size())
                        throw ArgumentError(layer_name(i, spec_.layers[i]) + ": expects " + std::to_string(l.in) +
                                            " inputs, previous layer gives " + std::to_string(in.size()));
                    lay.out = Shape{l.out, 1, 1};
                    lay.weight_size = l.out * l.in;
                    lay.bias_size = l.out;
                } else if constexpr (std::is_same_v<L, Conv2d>) {
                    if (l.in_ch != in.c || l.kernel == 0 || l.stride == 0)
                        throw ArgumentError(layer_name(i, spec_.layers[i]) + ": channel mismatch (expects " +
                                            std::to_string(l.in_ch) + ", got " + std::to_string(in.c) + ")");
                    lay.out = Shape{l.out_ch, conv_output_size(in.h, l.kernel, l.stride, l.padding),
                                    conv_output_size(in.w, l.kernel, l.stride, l.padding)};
                    lay.weight_size = l.out_ch * l.in_ch * l.kernel * l.kernel;
                    lay.bias_size = l.out_ch;
                } else if constexpr (std::is_same_v<L, Conv2dTranspose>) {
                    if (l.in_ch != in.c || l.kernel == 0 || l.stride == 0 || l.output_padding >= l.stride)
                        throw ArgumentError(layer_name(i, spec_.layers[i]) + ": invalid transposed convolution");
                    lay.out = Shape{l.out_ch,
                                    conv_transpose_output_size(in.h, l.kernel, l.stride, l.padding, l.output_padding),
                                    conv_transpose_output_size(in.w, l.kernel, l.stride, l.padding, l.output_padding)};
                    lay.weight_size = l.in_ch * l.out_ch * l.kernel * l.kernel;
                    lay.bias_size = l.out_ch;
                } else {
                    if (l.dims.size() != in.size())
                        throw ArgumentError(layer_name(i, spec_.layers[i]) + ": reshape size mismatch");
                    lay.out = l.dims;
                }
            },
            spec_.layers[i]);
        if (lay.weight_size > 0) {
            lay.weight_offset = offset;
            blocks_.push_back({layer_name(i, spec_.layers[i]) + ".weight", offset, lay.weight_size});
            offset += lay.weight_size;
            lay.bias_offset = offset;
            blocks_.push_back({layer_name(i, spec_.layers[i]) + ".bias", offset, lay.bias_size});
            offset += lay.bias_size;
        }
        shapes_.push_back(lay.out);
        layout_.push_back(lay);
    }
    param_count_ = offset;
}

template <class T>
std::vector<T> Network<T>::init_params(std::uint64_t seed) const {
    std::vector<T> params(param_count_, T(0));
    Rng rng(seed);
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerLayout& lay = layout_[i];
        if (lay.weight_size == 0) continue;
        double fan_in = 1.0;
        Activation act = Activation::linear;
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Dense>) {
                    fan_in = static_cast<double>(l.in);
                    act = l.act;
                } else if constexpr (std::is_same_v<L, Conv2d>) {
                    fan_in = static_cast<double>(l.in_ch * l.kernel * l.kernel);
                    act = l.act;
                } else if constexpr (std::is_same_v<L, Conv2dTranspose>) {
                    fan_in = std::max(1.0, static_cast<double>(l.in_ch * l.kernel * l.kernel) /
                                               static_cast<double>(l.stride * l.stride));
                    act = l.act;
                }
            },
            spec_.layers[i]);
        const double limit = std::sqrt((act == Activation::relu ? 6.0 : 3.0) / fan_in);
        for (std::size_t k = 0; k < lay.weight_size; ++k)
            params[lay.weight_offset + k] = static_cast<T>(rng.uniform(-limit, limit));
    }
    return params;
}

template <class T>
void Network<T>::check_params(std::span<const T> params) const {
    if (params.size() != param_count_) {
        throw ArgumentError("network expects " + std::to_string(param_count_) + " parameters, got " +
                            std::to_string(params.size()));
    }
}

template <class T>
Batch<T> Network<T>::forward(std::span<const T> params, const Batch<T>& input, ForwardCache<T>* cache) const {
    check_params(params);
    if (input.shape.size() != spec_.input.size() || input.values.size() != input.rows * spec_.input.size()) {
        throw ArgumentError("network input has " + std::to_string(input.shape.size()) + " values per sample, expected " +
                            std::to_string(spec_.input.size()));
    }
    const std::size_t n = input.rows;
    Batch<T> cur = input;
    cur.shape = spec_.input;
    if (cache) {
        cache->activations.clear();
        cache->activations.reserve(spec_.layers.size() + 1);
        cache->activations.push_back(cur);
    }
    std::vector<T> scratch;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerLayout& lay = layout_[i];
        Batch<T> next(n, lay.out);
        Activation act = Activation::linear;
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Dense>) {
                    act = l.act;
                    CMap<T> x(cur.values.data(), n, l.in);
                    CMap<T> w(params.data() + lay.weight_offset, l.out, l.in);
                    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(params.data() + lay.bias_offset, l.out);
                    Map<T> y(next.values.data(), n, l.out);
                    y.noalias() = x * w.transpose();
                    y.rowwise() += b;
                } else if constexpr (std::is_same_v<L, Conv2d>) {
                    act = l.act;
                    const ConvGeometry g{lay.in, lay.out.h, lay.out.w, l.kernel, l.stride, l.padding};
                    const std::size_t ncols = n * g.grid();
                    scratch.resize(g.patch_rows() * ncols);
                    im2col(cur.values.data(), n, g, scratch.data());
                    CMap<T> col(scratch.data(), g.patch_rows(), ncols);
                    CMap<T> w(params.data() + lay.weight_offset, l.out_ch, g.patch_rows());
                    RowMat<T> z = w * col;
                    for (std::size_t c = 0; c < l.out_ch; ++c) z.row(c).array() += params[lay.bias_offset + c];
                    to_sample_major(z.data(), n, l.out_ch, g.grid(), next.values.data());
                } else if constexpr (std::is_same_v<L, Conv2dTranspose>) {
                    act = l.act;
                    const ConvGeometry g{lay.out, lay.in.h, lay.in.w, l.kernel, l.stride, l.padding};
                    const std::size_t ncols = n * g.grid();
                    scratch.resize(l.in_ch * ncols);
                    to_channel_major(cur.values.data(), n, l.in_ch, g.grid(), scratch.data());
                    CMap<T> xb(scratch.data(), l.in_ch, ncols);
                    CMap<T> w(params.data() + lay.weight_offset, l.in_ch, g.patch_rows());
                    RowMat<T> col = w.transpose() * xb;
                    col2im(col.data(), n, g, next.values.data());
                    const std::size_t plane = lay.out.h * lay.out.w;
                    for (std::size_t b = 0; b < n; ++b)
                        for (std::size_t c = 0; c < l.out_ch; ++c) {
                            T* p = next.values.data() + (b * l.out_ch + c) * plane;
                            const T bias = params[lay.bias_offset + c];
                            for (std::size_t k = 0; k < plane; ++k) p[k] += bias;
                        }
                } else {
                    next.values = cur.values;
                }
            },
            spec_.layers[i]);
        apply_activation<T>(act, next.values);
        cur = std::move(next);
        if (cache) cache->activations.push_back(cur);
    }
    return cur;
}

template <class T>
Batch<T> Network<T>::backward(std::span<const T> params, const ForwardCache<T>& cache, const Batch<T>& grad_output,
                              std::span<T> grads) const {
    check_params(params);
    if (!cache.valid() || cache.activations.size() != spec_.layers.size() + 1) {
        throw UsageError("network backward called without a cached forward pass");
    }
    const std::size_t n = cache.activations.front().rows;
    if (grad_output.rows != n || grad_output.values.size() != n * output_shape().size()) {
        throw UsageError("backward gradient does not match the cached forward batch");
    }
    if (grads.size() != param_count_) throw ArgumentError("gradient buffer has wrong size");

    Batch<T> g = grad_output;
    g.shape = output_shape();
    std::vector<T> scratch;
    for (std::size_t ii = spec_.layers.size(); ii-- > 0;) {
        const LayerLayout& lay = layout_[ii];
        const Batch<T>& x = cache.activations[ii];
        const Batch<T>& y = cache.activations[ii + 1];
        Batch<T> gin(n, lay.in);
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Dense>) {
                    apply_activation_grad<T>(l.act, y.values, g.values);
                    CMap<T> dz(g.values.data(), n, l.out);
                    CMap<T> xm(x.values.data(), n, l.in);
                    CMap<T> w(params.data() + lay.weight_offset, l.out, l.in);
                    Map<T> dw(grads.data() + lay.weight_offset, l.out, l.in);
                    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(grads.data() + lay.bias_offset, l.out);
                    dw.noalias() += dz.transpose() * xm;
                    // Explicit row order: Eigen's vectorized colwise sum peels by
                    // the pointer's alignment, which breaks bit reproducibility.
                    std::vector<T> colsum(l.out, T(0));
                    for (std::size_t r = 0; r < n; ++r) {
                        const T* row = g.values.data() + r * l.out;
                        for (std::size_t j = 0; j < l.out; ++j) colsum[j] += row[j];
                    }
                    for (std::size_t j = 0; j < l.out; ++j) db[j] += colsum[j];
                    Map<T> dx(gin.values.data(), n, l.in);
                    dx.noalias() = dz * w;
                } else if constexpr (std::is_same_v<L, Conv2d>) {
                    apply_activation_grad<T>(l.act, y.values, g.values);
                    const ConvGeometry geo{lay.in, lay.out.h, lay.out.w, l.kernel, l.stride, l.padding};
                    const std::size_t ncols = n * geo.grid();
                    RowMat<T> dz(l.out_ch, ncols);
                    to_channel_major(g.values.data(), n, l.out_ch, geo.grid(), dz.data());
                    scratch.resize(geo.patch_rows() * ncols);
                    im2col(x.values.data(), n, geo, scratch.data());
                    CMap<T> col(scratch.data(), geo.patch_rows(), ncols);
                    Map<T> dw(grads.data() + lay.weight_offset, l.out_ch, geo.patch_rows());
                    dw.noalias() += dz * col.transpose();
                    for (std::size_t c = 0; c < l.out_ch; ++c) grads[lay.bias_offset + c] += dz.row(c).sum();
                    CMap<T> w(params.data() + lay.weight_offset, l.out_ch, geo.patch_rows());
                    RowMat<T> dcol = w.transpose() * dz;
                    col2im(dcol.data(), n, geo, gin.values.data());
                } else if constexpr (std::is_same_v<L, Conv2dTranspose>) {
                    apply_activation_grad<T>(l.act, y.values, g.values);
                    const ConvGeometry geo{lay.out, lay.in.h, lay.in.w, l.kernel, l.stride, l.padding};
                    const std::size_t ncols = n * geo.grid();
                    scratch.resize(geo.patch_rows() * ncols);
                    im2col(g.values.data(), n, geo, scratch.data());
                    CMap<T> dcol(scratch.data(), geo.patch_rows(), ncols);
                    RowMat<T> xb(l.in_ch, ncols);
                    to_channel_major(x.values.data(), n, l.in_ch, geo.grid(), xb.data());
                    Map<T> dw(grads.data() + lay.weight_offset, l.in_ch, geo.patch_rows());
                    dw.noalias() += xb * dcol.transpose();
                    const std::size_t plane = lay.out.h * lay.out.w;
                    for (std::size_t b = 0; b < n; ++b)
                        for (std::size_t c = 0; c < l.out_ch; ++c) {
                            const T* p = g.values.data() + (b * l.out_ch + c) * plane;
                            T s = T(0);
                            for (std::size_t k = 0; k < plane; ++k) s += p[k];
                            grads[lay.bias_offset + c] += s;
                        }
                    CMap<T> w(params.data() + lay.weight_offset, l.in_ch, geo.patch_rows());
                    RowMat<T> dxb = w * dcol;
                    to_sample_major(dxb.data(), n, l.in_ch, geo.grid(), gin.values.data());
                } else {
                    gin.values = g.values;
                }
            },
            spec_.layers[ii]);
        g = std::move(gin);
    }
    return g;
}

nlohmann::json to_json(const NetworkSpec& spec) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerSpec& layer : spec.layers) {
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, Dense>) {
                    layers.push_back({{"type", "dense"}, {"in", l.in}, {"out", l.out}, {"activation", to_string(l.act)}});
                } else if constexpr (std::is_same_v<L, Conv2d>) {
                    layers.push_back({{"type", "conv2d"}, {"in_ch", l.in_ch}, {"out_ch", l.out_ch},
                                      {"kernel", l.kernel}, {"stride", l.stride}, {"padding", l.padding},
                                      {"activation", to_string(l.act)}});
                } else if constexpr (std::is_same_v<L, Conv2dTranspose>) {
                    layers.push_back({{"type", "conv2d_transpose"}, {"in_ch", l.in_ch}, {"out_ch", l.out_ch},
                                      {"kernel", l.kernel}, {"stride", l.stride}, {"padding", l.padding},
                                      {"output_padding", l.output_padding}, {"activation", to_string(l.act)}});
                } else {
                    layers.push_back({{"type", "reshape"}, {"dims", {l.dims.c, l.dims.h, l.dims.w}}});
                }
            },
            layer);
    }
    return {{"input", {spec.input.c, spec.input.h, spec.input.w}}, {"layers", layers}};
}

NetworkSpec network_spec_from_json(const nlohmann::json& j) {
    try {
        NetworkSpec spec;
        const auto& in = j.at("input");
        spec.input = Shape{in.at(0).get<std::size_t>(), in.at(1).get<std::size_t>(), in.at(2).get<std::size_t>()};
        for (const auto& l : j.at("layers")) {
            const std::string type = l.at("type");
            if (type == "dense") {
                spec.layers.emplace_back(Dense{l.at("in"), l.at("out"), activation_from_string(l.at("activation"))});
            } else if (type == "conv2d") {
                spec.layers.emplace_back(Conv2d{l.at("in_ch"), l.at("out_ch"), l.at("kernel"), l.at("stride"),
                                                l.at("padding"), activation_from_string(l.at("activation"))});
            } else if (type == "conv2d_transpose") {
                spec.layers.emplace_back(Conv2dTranspose{l.at("in_ch"), l.at("out_ch"), l.at("kernel"), l.at("stride"),
                                                         l.at("padding"), l.value("output_padding", std::size_t{0}),
                                                         activation_from_string(l.at("activation"))});
            } else if (type == "reshape") {
                const auto& d = l.at("dims");
                spec.layers.emplace_back(Reshape{Shape{d.at(0), d.at(1), d.at(2)}});
            } else {
                throw ArgumentError("unknown layer type '" + type + "'");
            }
        }
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed network spec: ") + e.what());
    }
}

template class Network<float>;
template class Network<double>;

}  // namespace gpd::numkit
