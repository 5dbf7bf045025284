#pragma once

// Two-branch hash network: a shared affine frame/image encoder, an image hash
// head over the encoded vector and a video hash head over vec(Y) from covariance
// pooling. Both heads end in a sigmoid so codes live in (0, 1)^K.

#include <spdhash/covpool.hpp>
#include <spdhash/errors.hpp>
#include <spdhash/linalg.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spdhash {

enum class Modality : std::uint8_t { image = 0, video = 1 };

inline const char* to_string(Modality m) { return m == Modality::image ? "image" : "video"; }

enum class EncoderActivation : std::uint8_t { identity = 0, tanh = 1 };

/// Sigmoid-relaxed code, every entry strictly inside (0, 1).
struct RelaxedCode {
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    friend bool operator==(const RelaxedCode&, const RelaxedCode&) = default;
};

/// K bits packed into 64-bit words, bit i of the code in word i / 64, position i % 64.
class BinaryCode {
public:
    BinaryCode() = default;
    explicit BinaryCode(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}

    static BinaryCode from_bits(std::span<const std::uint8_t> bits) {
        BinaryCode c(bits.size());
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (bits[i] > 1) throw DomainError("BinaryCode: bit value must be 0 or 1");
            c.set(i, bits[i] == 1);
        }
        return c;
    }

    /// Parses a string of '0'/'1' characters.
    static BinaryCode from_string(std::string_view s) {
        BinaryCode c(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] != '0' && s[i] != '1') throw DomainError("BinaryCode: invalid bit character");
            c.set(i, s[i] == '1');
        }
        return c;
    }

    std::size_t size() const noexcept { return bits_; }
    std::span<const std::uint64_t> words() const noexcept { return words_; }

    bool test(std::size_t i) const noexcept { return (words_[i / 64] >> (i % 64)) & 1U; }

    void set(std::size_t i, bool value) noexcept {
        const std::uint64_t mask = std::uint64_t{1} << (i % 64);
        if (value) words_[i / 64] |= mask;
        else words_[i / 64] &= ~mask;
    }

    std::string to_string() const {
        std::string s(bits_, '0');
        for (std::size_t i = 0; i < bits_; ++i)
            if (test(i)) s[i] = '1';
        return s;
    }

    friend bool operator==(const BinaryCode&, const BinaryCode&) = default;

private:
    std::size_t bits_ = 0;
    std::vector<std::uint64_t> words_;
};

struct ModelShape {
    std::size_t input_dim = 0;    // d0
    std::size_t encoded_dim = 0;  // d
    std::size_t code_bits = 0;    // K
};

/// Encoder, image head and video head parameters.
///
/// vec(Y) is taken row-major, so column r*d + c of video_w multiplies Y(r, c).
struct Model {
    Matrix enc_w;                  // d x d0
    std::vector<double> enc_b;     // d
    Matrix img_w;                  // K x d
    std::vector<double> img_b;     // K
    Matrix vid_w;                  // K x d^2
    std::vector<double> vid_b;     // K
    double epsilon = kDefaultEpsilon;
    EncoderActivation activation = EncoderActivation::identity;

    std::size_t input_dim() const noexcept { return enc_w.cols(); }
    std::size_t encoded_dim() const noexcept { return enc_w.rows(); }
    std::size_t code_bits() const noexcept { return img_w.rows(); }

    /// Throws DimensionError if the parameter blocks disagree with each other.
    void validate() const {
        const std::size_t d = encoded_dim();
        const std::size_t k = code_bits();
        if (d == 0 || k == 0 || input_dim() == 0) throw DimensionError("Model: empty dimension");
        if (enc_b.size() != d || img_w.cols() != d || img_b.size() != k || vid_w.rows() != k ||
            vid_w.cols() != d * d || vid_b.size() != k) {
            throw DimensionError("Model: inconsistent parameter shapes");
        }
        if (!(epsilon > 0.0)) throw DomainError("Model: epsilon must be positive");
    }

    friend bool operator==(const Model&, const Model&) = default;
};

inline Model make_zero_model(ModelShape shape, double epsilon = kDefaultEpsilon,
                             EncoderActivation activation = EncoderActivation::identity) {
    const std::size_t d = shape.encoded_dim;
    const std::size_t k = shape.code_bits;
    Model m{Matrix(d, shape.input_dim), std::vector<double>(d, 0.0),
            Matrix(k, d),              std::vector<double>(k, 0.0),
            Matrix(k, d * d),          std::vector<double>(k, 0.0),
            epsilon,                   activation};
    m.validate();
    return m;
}

/// Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)), zero biases.
inline Model init_model(ModelShape shape, std::uint64_t seed, double epsilon = kDefaultEpsilon,
                        EncoderActivation activation = EncoderActivation::identity) {
    Model m = make_zero_model(shape, epsilon, activation);
    std::mt19937_64 rng(seed);
    auto fill = [&rng](Matrix& w) {
        const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        std::uniform_real_distribution<double> dist(-a, a);
        for (double& x : w.data()) x = dist(rng);
    };
    fill(m.enc_w);
    fill(m.img_w);
    fill(m.vid_w);
    return m;
}

inline double sigmoid(double z) noexcept {
    constexpr double lo = std::numeric_limits<double>::denorm_min();
    const double hi = std::nextafter(1.0, 0.0);
    const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return std::clamp(s, lo, hi);
}

namespace detail {

inline void require_length(std::span<const double> x, std::size_t n, const char* what) {
    if (x.size() != n) {
        throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) +
                             ", got " + std::to_string(x.size()));
    }
}

inline RelaxedCode affine_sigmoid(const Matrix& w, std::span<const double> b,
                                  std::span<const double> x) {
    std::vector<double> z = matvec(w, x);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = sigmoid(z[i] + b[i]);
    return RelaxedCode{std::move(z)};
}

} // namespace detail

/// Encoder pre-activation W_enc x + b_enc.
inline std::vector<double> encoder_preactivation(std::span<const double> x, const Model& model) {
    detail::require_length(x, model.input_dim(), "encode_feature");
    if (!all_finite(x)) throw DomainError("encode_feature: non-finite descriptor");
    std::vector<double> h = matvec(model.enc_w, x);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += model.enc_b[i];
    return h;
}

inline std::vector<double> encode_feature(std::span<const double> x, const Model& model) {
    std::vector<double> h = encoder_preactivation(x, model);
    if (model.activation == EncoderActivation::tanh)
        for (double& v : h) v = std::tanh(v);
    return h;
}

struct ImageForward {
    std::vector<double> input;    // x, d0
    std::vector<double> encoded;  // h, d
    RelaxedCode code;
};

struct VideoForward {
    Matrix frames;  // m x d0 raw descriptors
    PoolCache pool; // pool.features is the encoded m x d matrix
    RelaxedCode code;
};

inline ImageForward forward_image_full(std::span<const double> x, const Model& model) {
    ImageForward f;
    f.input.assign(x.begin(), x.end());
    f.encoded = encode_feature(x, model);
    f.code = detail::affine_sigmoid(model.img_w, model.img_b, f.encoded);
    return f;
}

inline RelaxedCode forward_image(std::span<const double> x, const Model& model) {
    return forward_image_full(x, model).code;
}

/// Encodes every frame (row of `frames`), pools the m x d result and hashes vec(Y).
inline VideoForward forward_video(const Matrix& frames, const Model& model) {
    if (frames.rows() == 0) throw DimensionError("forward_video: video has no frames");
    if (frames.cols() != model.input_dim()) {
        throw DimensionError("forward_video: frame length " + std::to_string(frames.cols()) +
                             " != input dimension " + std::to_string(model.input_dim()));
    }
    const std::size_t d = model.encoded_dim();
    Matrix encoded(frames.rows(), d);
    for (std::size_t i = 0; i < frames.rows(); ++i) {
        const std::vector<double> h = encode_feature(frames.row(i), model);
        std::copy(h.begin(), h.end(), encoded.row(i).begin());
    }
    VideoForward f{frames, pool_forward(encoded, model.epsilon), {}};
    f.code = detail::affine_sigmoid(model.vid_w, model.vid_b, f.pool.pooled.data());
    return f;
}

/// Bit i is set iff values[i] >= 0.5.
inline BinaryCode binarize(const RelaxedCode& code) {
    BinaryCode b(code.size());
    for (std::size_t i = 0; i < code.size(); ++i) b.set(i, code.values[i] >= 0.5);
    return b;
}

/// Parameter gradients, laid out like Model.
struct ModelGrads {
    Matrix enc_w;
    std::vector<double> enc_b;
    Matrix img_w;
    std::vector<double> img_b;
    Matrix vid_w;
    std::vector<double> vid_b;

    static ModelGrads zeros_like(const Model& m) {
        return {Matrix(m.enc_w.rows(), m.enc_w.cols()), std::vector<double>(m.enc_b.size(), 0.0),
                Matrix(m.img_w.rows(), m.img_w.cols()), std::vector<double>(m.img_b.size(), 0.0),
                Matrix(m.vid_w.rows(), m.vid_w.cols()), std::vector<double>(m.vid_b.size(), 0.0)};
    }

    ModelGrads& operator+=(const ModelGrads& o) {
        enc_w += o.enc_w;
        img_w += o.img_w;
        vid_w += o.vid_w;
        auto add = [](std::vector<double>& a, const std::vector<double>& b) {
            for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
        };
        add(enc_b, o.enc_b);
        add(img_b, o.img_b);
        add(vid_b, o.vid_b);
        return *this;
    }

    double squared_norm() const {
        double s = 0.0;
        for (const Matrix* w : {&enc_w, &img_w, &vid_w})
            for (double v : w->data()) s += v * v;
        for (const std::vector<double>* b : {&enc_b, &img_b, &vid_b})
            for (double v : *b) s += v * v;
        return s;
    }
};

namespace detail {

// Backprop through the encoder for one descriptor. Returns dJ/dx.
inline std::vector<double> encoder_backward(const Model& model, std::span<const double> x,
                                            std::span<const double> encoded,
                                            std::span<const double> d_encoded, ModelGrads& g) {
    std::vector<double> d_pre(d_encoded.begin(), d_encoded.end());
    if (model.activation == EncoderActivation::tanh)
        for (std::size_t i = 0; i < d_pre.size(); ++i) d_pre[i] *= 1.0 - encoded[i] * encoded[i];
    for (std::size_t i = 0; i < d_pre.size(); ++i) {
        g.enc_b[i] += d_pre[i];
        auto row = g.enc_w.row(i);
        for (std::size_t j = 0; j < x.size(); ++j) row[j] += d_pre[i] * x[j];
    }
    return matvec_t(model.enc_w, d_pre);
}

// Sigmoid + affine head backward. Returns dJ/d(input of head).
inline std::vector<double> head_backward(const Matrix& w, std::span<const double> input,
                                         const RelaxedCode& code, std::span<const double> d_code,
                                         Matrix& gw, std::vector<double>& gb) {
    std::vector<double> dz(code.size());
    for (std::size_t k = 0; k < dz.size(); ++k) {
        const double s = code.values[k];
        dz[k] = d_code[k] * s * (1.0 - s);
        gb[k] += dz[k];
        if (dz[k] == 0.0) continue;
        auto row = gw.row(k);
        for (std::size_t j = 0; j < input.size(); ++j) row[j] += dz[k] * input[j];
    }
    return matvec_t(w, dz);
}

} // namespace detail

/// Accumulates parameter gradients for one image; returns dJ/dx (d0).
inline std::vector<double> backward_image(const Model& model, const ImageForward& f,
                                          std::span<const double> d_code, ModelGrads& grads) {
    detail::require_length(d_code, model.code_bits(), "backward_image");
    const std::vector<double> d_h =
        detail::head_backward(model.img_w, f.encoded, f.code, d_code, grads.img_w, grads.img_b);
    return detail::encoder_backward(model, f.input, f.encoded, d_h, grads);
}

/// Accumulates parameter gradients for one video; returns dJ/d(frames) (m x d0).
inline Matrix backward_video(const Model& model, const VideoForward& f,
                             std::span<const double> d_code, ModelGrads& grads,
                             SpectrumPolicy policy = SpectrumPolicy::error) {
    detail::require_length(d_code, model.code_bits(), "backward_video");
    const std::size_t d = model.encoded_dim();
    std::vector<double> d_vec = detail::head_backward(model.vid_w, f.pool.pooled.data(), f.code,
                                                      d_code, grads.vid_w, grads.vid_b);
    const Matrix d_pooled(d, d, std::move(d_vec));
    const Matrix d_encoded = pool_backward(f.pool, d_pooled, policy);
    Matrix d_frames(f.frames.rows(), f.frames.cols());
    for (std::size_t i = 0; i < f.frames.rows(); ++i) {
        const std::vector<double> dx = detail::encoder_backward(
            model, f.frames.row(i), f.pool.features.row(i), d_encoded.row(i), grads);
        std::copy(dx.begin(), dx.end(), d_frames.row(i).begin());
    }
    return d_frames;
}

/// One sample of a heterogeneous batch: either an image or a video.
struct SampleForward {
    Modality modality = Modality::image;
    ImageForward image;
    VideoForward video;

    const RelaxedCode& code() const { return modality == Modality::image ? image.code : video.code; }
};

struct BatchGradients {
    ModelGrads params;
    std::vector<Matrix> input_grads;  // per sample; 1 x d0 for images, m x d0 for videos
};

/// Backprop for a whole batch in sample order; encoder gradients of both branches add up.
inline BatchGradients backward_heads(const Model& model, std::span<const SampleForward> batch,
                                     std::span<const std::vector<double>> code_grads,
                                     SpectrumPolicy policy = SpectrumPolicy::error) {
    if (batch.size() != code_grads.size()) {
        throw DimensionError("backward_heads: " + std::to_string(batch.size()) + " samples but " +
                             std::to_string(code_grads.size()) + " code gradients");
    }
    BatchGradients out{ModelGrads::zeros_like(model), {}};
    out.input_grads.reserve(batch.size());
    for (std::size_t n = 0; n < batch.size(); ++n) {
        if (batch[n].modality == Modality::image) {
            std::vector<double> dx = backward_image(model, batch[n].image, code_grads[n], out.params);
            const std::size_t len = dx.size();
            out.input_grads.emplace_back(1, len, std::move(dx));
        } else {
            out.input_grads.push_back(
                backward_video(model, batch[n].video, code_grads[n], out.params, policy));
        }
    }
    return out;
}

} // namespace spdhash
