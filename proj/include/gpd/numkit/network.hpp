#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace gpd::numkit {

enum class Activation { relu, softplus, linear };

/// Per-sample tensor shape (channels, height, width). Flat vectors are
/// {n, 1, 1}.
struct Shape {
    std::size_t c = 1;
    std::size_t h = 1;
    std::size_t w = 1;

    std::size_t size() const { return c * h * w; }
    bool operator==(const Shape&) const = default;
};

struct Dense {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation act = Activation::linear;
};

struct Conv2d {
    std::size_t in_ch = 0;
    std::size_t out_ch = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    Activation act = Activation::linear;
};

/// Adjoint of Conv2d. output_padding adds rows/columns at the far edge so
/// odd kernels with stride 2 can exactly double the spatial size.
struct Conv2dTranspose {
    std::size_t in_ch = 0;
    std::size_t out_ch = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t output_padding = 0;
    Activation act = Activation::linear;
};

struct Reshape {
    Shape dims;
};

using LayerSpec = std::variant<Dense, Conv2d, Conv2dTranspose, Reshape>;

struct NetworkSpec {
    Shape input;
    std::vector<LayerSpec> layers;
};

/// Contiguous slice of the flat parameter vector, e.g. one layer's weights.
struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/// A batch of samples stored row-major, one flattened sample per row.
template <class T>
struct Batch {
    std::size_t rows = 0;
    Shape shape;
    std::vector<T> values;

    Batch() = default;
    Batch(std::size_t n, Shape s) : rows(n), shape(s), values(n * s.size(), T(0)) {}

    std::size_t sample_size() const { return shape.size(); }
    std::span<T> sample(std::size_t i) { return {values.data() + i * shape.size(), shape.size()}; }
    std::span<const T> sample(std::size_t i) const { return {values.data() + i * shape.size(), shape.size()}; }
};

/// Layer outputs recorded by a forward pass, consumed by backward().
template <class T>
struct ForwardCache {
    std::vector<Batch<T>> activations;  // activations[0] is the input
    bool valid() const { return !activations.empty(); }
};

/// Feed-forward network over dense and 2D convolution layers with a flat
/// parameter vector. Stateless apart from its spec; safe to share between
/// threads.
template <class T>
class Network {
public:
    explicit Network(NetworkSpec spec);

    const NetworkSpec& spec() const { return spec_; }
    Shape input_shape() const { return spec_.input; }
    Shape output_shape() const { return shapes_.back(); }
    std::size_t param_count() const { return param_count_; }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }

    /// Seeded He/LeCun-uniform weights, zero biases.
    std::vector<T> init_params(std::uint64_t seed) const;

    Batch<T> forward(std::span<const T> params, const Batch<T>& input, ForwardCache<T>* cache = nullptr) const;

    /// Accumulates dL/dparams into grads (caller zeroes it) and returns
    /// dL/dinput. Throws UsageError when cache holds no forward state for
    /// this batch.
    Batch<T> backward(std::span<const T> params, const ForwardCache<T>& cache, const Batch<T>& grad_output,
                      std::span<T> grads) const;

private:
    struct LayerLayout {
        Shape in;
        Shape out;
        std::size_t weight_offset = 0;
        std::size_t weight_size = 0;
        std::size_t bias_offset = 0;
        std::size_t bias_size = 0;
    };

    void check_params(std::span<const T> params) const;

    NetworkSpec spec_;
    std::vector<Shape> shapes_;
    std::vector<LayerLayout> layout_;
    std::vector<ParamBlock> blocks_;
    std::size_t param_count_ = 0;
};

/// Output spatial size of a convolution.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);
std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding,
                                       std::size_t output_padding);

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace gpd::numkit
