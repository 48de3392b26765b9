#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "retinex/image.hpp"

namespace retinex {

static_assert(std::endian::native == std::endian::little,
              "HPW1 reader/writer assumes a little-endian host");

/// C x H x W activations, channel-major.
struct FeatureStack {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> data;

    FeatureStack() = default;
    FeatureStack(std::size_t c, std::size_t h, std::size_t w)
        : channels(c), height(h), width(w), data(c * h * w, 0.0f) {}

    float* channel(std::size_t c) noexcept { return data.data() + c * height * width; }
    const float* channel(std::size_t c) const noexcept { return data.data() + c * height * width; }

    static FeatureStack from_plane(const ImagePlane& p) {
        FeatureStack s(1, p.height(), p.width());
        for (std::size_t i = 0; i < p.size(); ++i) s.data[i] = static_cast<float>(p[i]);
        return s;
    }
};

enum class Activation : std::uint8_t { none = 0, relu = 1 };

/// 3x3 dilated convolution. Kernel layout is [out][in][3][3].
struct ConvLayer {
    std::uint32_t in_channels = 0;
    std::uint32_t out_channels = 0;
    std::uint32_t dilation = 1;
    Activation activation = Activation::none;
    std::vector<float> kernel;
    std::vector<float> bias;

    static constexpr std::size_t taps = 9;

    float& weight(std::size_t out, std::size_t in, std::size_t ky, std::size_t kx) noexcept {
        return kernel[((out * in_channels + in) * 3 + ky) * 3 + kx];
    }
    float weight(std::size_t out, std::size_t in, std::size_t ky, std::size_t kx) const noexcept {
        return kernel[((out * in_channels + in) * 3 + ky) * 3 + kx];
    }

    static ConvLayer zeros(std::uint32_t in, std::uint32_t out, std::uint32_t dilation,
                           Activation act) {
        ConvLayer l;
        l.in_channels = in;
        l.out_channels = out;
        l.dilation = dilation;
        l.activation = act;
        l.kernel.assign(static_cast<std::size_t>(in) * out * taps, 0.0f);
        l.bias.assign(out, 0.0f);
        return l;
    }

    friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

/// Cross-correlation with zero padding equal to the dilation, so the spatial
/// size is preserved. Bias and (optional) ReLU are applied.
inline FeatureStack conv2d_dilated(const FeatureStack& input, const ConvLayer& layer) {
    if (input.channels != layer.in_channels) {
        throw ShapeError("conv2d_dilated: input has " + std::to_string(input.channels) +
                         " channels, layer expects " + std::to_string(layer.in_channels));
    }
    if (layer.dilation < 1) throw InvariantError("conv2d_dilated: dilation must be >= 1");
    const std::size_t h = input.height, w = input.width;
    const auto d = static_cast<std::ptrdiff_t>(layer.dilation);
    FeatureStack out(layer.out_channels, h, w);

    for (std::size_t o = 0; o < layer.out_channels; ++o) {
        float* dst = out.channel(o);
        std::fill(dst, dst + h * w, layer.bias[o]);
        for (std::size_t i = 0; i < layer.in_channels; ++i) {
            const float* src = input.channel(i);
            for (std::size_t ky = 0; ky < 3; ++ky) {
                const std::ptrdiff_t dy = (static_cast<std::ptrdiff_t>(ky) - 1) * d;
                for (std::size_t kx = 0; kx < 3; ++kx) {
                    const float wgt = layer.weight(o, i, ky, kx);
                    if (wgt == 0.0f) continue;
                    const std::ptrdiff_t dx = (static_cast<std::ptrdiff_t>(kx) - 1) * d;
                    // Output columns whose shifted source column stays inside [0, w).
                    const std::ptrdiff_t c0 = std::max<std::ptrdiff_t>(0, -dx);
                    const std::ptrdiff_t c1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w),
                                                                       static_cast<std::ptrdiff_t>(w) - dx);
                    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(h); ++r) {
                        const std::ptrdiff_t sr = r + dy;
                        if (sr < 0 || sr >= static_cast<std::ptrdiff_t>(h)) continue;
                        float* drow = dst + r * static_cast<std::ptrdiff_t>(w);
                        const float* srow = src + sr * static_cast<std::ptrdiff_t>(w) + dx;
                        for (std::ptrdiff_t c = c0; c < c1; ++c) drow[c] += wgt * srow[c];
                    }
                }
            }
        }
        if (layer.activation == Activation::relu) {
            for (std::size_t k = 0; k < h * w; ++k) dst[k] = dst[k] > 0.0f ? dst[k] : 0.0f;
        }
    }
    return out;
}

/**
 * Parameters of the learned descent direction: seven dilated 3x3 layers
 * (1->64, five 64->64, 64->1), ReLU after the first six. Batch norm is folded
 * into the kernels before export, so no normalization state exists here.
 *
 * The network output is the correction N(I) that is subtracted from I.
 */
struct DenoiserWeights {
    static constexpr std::size_t layer_count = 7;
    static constexpr std::uint32_t hidden_channels = 64;
    static constexpr std::uint32_t default_dilations[layer_count] = {1, 2, 3, 4, 3, 2, 1};

    std::vector<ConvLayer> layers;
    bool residual = true;

    void validate() const {
        if (layers.size() != layer_count) {
            throw InvariantError("denoiser: expected " + std::to_string(layer_count) +
                                 " layers, found " + std::to_string(layers.size()));
        }
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const ConvLayer& l = layers[k];
            const std::uint32_t want_in = k == 0 ? 1 : hidden_channels;
            const std::uint32_t want_out = k + 1 == layer_count ? 1 : hidden_channels;
            const Activation want_act = k + 1 == layer_count ? Activation::none : Activation::relu;
            const std::string where = "denoiser layer " + std::to_string(k + 1);
            if (l.in_channels != want_in || l.out_channels != want_out) {
                throw InvariantError(where + ": expected " + std::to_string(want_in) + "->" +
                                     std::to_string(want_out) + " channels, found " +
                                     std::to_string(l.in_channels) + "->" +
                                     std::to_string(l.out_channels));
            }
            if (l.activation != want_act) throw InvariantError(where + ": wrong activation");
            if (l.dilation < 1) throw InvariantError(where + ": dilation must be >= 1");
            if (l.kernel.size() != static_cast<std::size_t>(l.in_channels) * l.out_channels * ConvLayer::taps ||
                l.bias.size() != l.out_channels) {
                throw InvariantError(where + ": parameter count mismatch");
            }
        }
    }

    /// Architecture with every weight and bias zero.
    static DenoiserWeights zeros() {
        DenoiserWeights w;
        for (std::size_t k = 0; k < layer_count; ++k) {
            const std::uint32_t in = k == 0 ? 1 : hidden_channels;
            const std::uint32_t out = k + 1 == layer_count ? 1 : hidden_channels;
            w.layers.push_back(ConvLayer::zeros(
                in, out, default_dilations[k],
                k + 1 == layer_count ? Activation::none : Activation::relu));
        }
        return w;
    }

    friend bool operator==(const DenoiserWeights&, const DenoiserWeights&) = default;
};

/// Runs the network and returns N(I) as a plane.
inline ImagePlane network_correction(const DenoiserWeights& weights, const ImagePlane& input) {
    weights.validate();
    FeatureStack x = FeatureStack::from_plane(input);
    for (const ConvLayer& layer : weights.layers) x = conv2d_dilated(x, layer);
    ImagePlane out(input.height(), input.width());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(x.data[i]);
    return out;
}

// ---------------------------------------------------------------- HPW1 format
//
// little-endian: "HPW1", u32 layer_count, then per layer
//   u32 in_ch, u32 out_ch, u32 dilation, u8 activation,
//   f32 kernel[out][in][3][3], f32 bias[out]

inline constexpr char hpw1_magic[4] = {'H', 'P', 'W', '1'};

inline std::size_t hpw1_layer_record_size(const ConvLayer& l) {
    return 3 * sizeof(std::uint32_t) + 1 +
           sizeof(float) * (static_cast<std::size_t>(l.in_channels) * l.out_channels * 9 + l.out_channels);
}

inline std::vector<std::uint8_t> encode_hpw1(const DenoiserWeights& w) {
    w.validate();
    std::vector<std::uint8_t> out;
    auto put = [&out](const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    };
    put(hpw1_magic, 4);
    const auto count = static_cast<std::uint32_t>(w.layers.size());
    put(&count, 4);
    for (const ConvLayer& l : w.layers) {
        put(&l.in_channels, 4);
        put(&l.out_channels, 4);
        put(&l.dilation, 4);
        const auto act = static_cast<std::uint8_t>(l.activation);
        put(&act, 1);
        put(l.kernel.data(), l.kernel.size() * sizeof(float));
        put(l.bias.data(), l.bias.size() * sizeof(float));
    }
    return out;
}

/// Thrown when a weight file is not HPW1 or is truncated.
class WeightFormatError : public CorruptFileError {
public:
    using CorruptFileError::CorruptFileError;
};

inline DenoiserWeights decode_hpw1(const std::vector<std::uint8_t>& bytes, const std::string& name = "<memory>") {
    std::size_t pos = 0;
    auto take = [&](void* dst, std::size_t n) {
        if (bytes.size() - pos < n) throw WeightFormatError("HPW1 '" + name + "': truncated file");
        std::memcpy(dst, bytes.data() + pos, n);
        pos += n;
    };
    char magic[4];
    if (bytes.size() < 4) throw WeightFormatError("HPW1 '" + name + "': truncated file");
    take(magic, 4);
    if (std::memcmp(magic, hpw1_magic, 4) != 0) {
        throw WeightFormatError("HPW1 '" + name + "': bad magic");
    }
    std::uint32_t count = 0;
    take(&count, 4);
    if (count > 1024) throw WeightFormatError("HPW1 '" + name + "': implausible layer count");

    DenoiserWeights w;
    for (std::uint32_t k = 0; k < count; ++k) {
        ConvLayer l;
        take(&l.in_channels, 4);
        take(&l.out_channels, 4);
        take(&l.dilation, 4);
        std::uint8_t act = 0;
        take(&act, 1);
        if (act > 1) throw WeightFormatError("HPW1 '" + name + "': unknown activation code");
        l.activation = static_cast<Activation>(act);
        const std::size_t n = static_cast<std::size_t>(l.in_channels) * l.out_channels * ConvLayer::taps;
        if (n > (bytes.size() - pos) / sizeof(float)) {
            throw WeightFormatError("HPW1 '" + name + "': truncated file");
        }
        l.kernel.resize(n);
        take(l.kernel.data(), n * sizeof(float));
        l.bias.resize(l.out_channels);
        take(l.bias.data(), l.bias.size() * sizeof(float));
        w.layers.push_back(std::move(l));
    }
    if (pos != bytes.size()) throw WeightFormatError("HPW1 '" + name + "': trailing bytes");
    w.validate();
    return w;
}

inline DenoiserWeights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weight file '" + path.string() + "'");
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                          std::istreambuf_iterator<char>());
    return decode_hpw1(bytes, path.string());
}

inline void save_weights(const DenoiserWeights& w, const std::filesystem::path& path) {
    const auto bytes = encode_hpw1(w);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failure on '" + path.string() + "'");
}

// ---------------------------------------------------------------- descent directions

/// Separable Gaussian blur, radius ceil(3 sigma), replicate boundary.
inline ImagePlane gaussian_blur(const ImagePlane& p, double sigma) {
    if (!(sigma > 0.0)) throw InvariantError("gaussian_blur: sigma must be positive");
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        const double v = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
        taps[static_cast<std::size_t>(k + radius)] = v;
        total += v;
    }
    for (double& t : taps) t /= total;

    const auto h = static_cast<std::ptrdiff_t>(p.height());
    const auto w = static_cast<std::ptrdiff_t>(p.width());
    auto clampi = [](std::ptrdiff_t v, std::ptrdiff_t hi) { return std::clamp<std::ptrdiff_t>(v, 0, hi - 1); };
    ImagePlane tmp(p.height(), p.width());
    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                acc += taps[static_cast<std::size_t>(k + radius)] *
                       p(static_cast<std::size_t>(r), static_cast<std::size_t>(clampi(c + k, w)));
            }
            tmp(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
        }
    }
    ImagePlane out(p.height(), p.width());
    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                acc += taps[static_cast<std::size_t>(k + radius)] *
                       tmp(static_cast<std::size_t>(clampi(r + k, h)), static_cast<std::size_t>(c));
            }
            out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
        }
    }
    return out;
}

struct IdentityDirection {};

struct GaussianBlurDirection {
    double sigma = 1.0;
};

struct NetworkDirection {
    std::shared_ptr<const DenoiserWeights> weights;
    /// Counts network evaluations; shared between copies of the direction.
    std::shared_ptr<std::atomic<std::uint64_t>> invocations =
        std::make_shared<std::atomic<std::uint64_t>>(0);

    explicit NetworkDirection(DenoiserWeights w)
        : weights(std::make_shared<const DenoiserWeights>(std::move(w))) {
        weights->validate();
    }
    explicit NetworkDirection(std::shared_ptr<const DenoiserWeights> w) : weights(std::move(w)) {
        if (!weights) throw InvariantError("NetworkDirection: null weights");
        weights->validate();
    }

    std::uint64_t invocation_count() const noexcept { return invocations->load(); }
};

using DescentDirection = std::variant<IdentityDirection, GaussianBlurDirection, NetworkDirection>;

inline bool uses_network(const DescentDirection& d) noexcept {
    return std::holds_alternative<NetworkDirection>(d);
}

/// I~ = I - N(I). Not projected; the caller clamps when needed.
inline ImagePlane apply_descent(const DescentDirection& direction, const ImagePlane& input) {
    validate_plane(input, false, "apply_descent input");
    return std::visit(
        [&input](const auto& d) -> ImagePlane {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, IdentityDirection>) {
                return input;
            } else if constexpr (std::is_same_v<D, GaussianBlurDirection>) {
                return gaussian_blur(input, d.sigma);
            } else {
                d.invocations->fetch_add(1);
                const ImagePlane correction = network_correction(*d.weights, input);
                ImagePlane out(input.height(), input.width());
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = input[i] - correction[i];
                return out;
            }
        },
        direction);
}

}  // namespace retinex
