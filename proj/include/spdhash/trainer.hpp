#pragma once

// Mini-batch SGD with momentum and weight decay over subject-balanced batches.
// Gradients flow objective -> hash heads -> covariance pooling -> shared encoder.

#include <spdhash/covpool.hpp>
#include <spdhash/dataio.hpp>
#include <spdhash/errors.hpp>
#include <spdhash/hashnet.hpp>
#include <spdhash/objective.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <exception>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace spdhash {

enum class ImageSource : std::uint8_t {
    video_frames,   ///< draw a random frame from a random video of the subject
    image_records,  ///< draw one of the subject's image records
};

struct TrainConfig {
    double learning_rate = 1e-4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t steps = 2000;
    std::size_t subjects_per_batch = 6;
    std::size_t pairs_per_subject = 5;
    double alpha = 2.0;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    std::size_t code_bits = 12;
    std::size_t encoded_dim = 32;
    double epsilon = kDefaultEpsilon;
    std::uint64_t seed = 0;
    SpectrumPolicy spectrum_policy = SpectrumPolicy::clamp;
    EncoderActivation activation = EncoderActivation::identity;
    ImageSource image_source = ImageSource::video_frames;
    std::size_t threads = 0;  // 0: hardware concurrency; results do not depend on it

    ObjectiveConfig objective() const { return {alpha, lambda1, lambda2}; }

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0, 1)");
        if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be non-negative");
        if (subjects_per_batch < 2) throw ConfigError("train: subjects_per_batch must be at least 2");
        if (pairs_per_subject < 1) throw ConfigError("train: pairs_per_subject must be at least 1");
        if (code_bits < 1) throw ConfigError("train: code length must be at least 1");
        if (encoded_dim < 1) throw ConfigError("train: encoded_dim must be at least 1");
        if (!(epsilon > 0.0)) throw ConfigError("train: epsilon must be positive");
        objective().validate();
    }
};

/// Archive contents widened to double and indexed by subject.
struct Dataset {
    std::size_t input_dim = 0;
    std::vector<Matrix> videos;
    std::vector<std::uint32_t> video_labels;
    std::vector<std::vector<double>> images;
    std::vector<std::uint32_t> image_labels;
    std::map<std::uint32_t, std::vector<std::size_t>> videos_by_label;
    std::map<std::uint32_t, std::vector<std::size_t>> images_by_label;

    static Dataset from_archive(const FeatureArchive& archive) {
        Dataset ds;
        ds.input_dim = archive.input_dim;
        for (const FeatureRecord& r : archive.records) {
            validate_record(r, archive.input_dim);
            if (r.modality == Modality::video) {
                ds.videos_by_label[r.label].push_back(ds.videos.size());
                ds.videos.push_back(r.as_matrix(archive.input_dim));
                ds.video_labels.push_back(r.label);
            } else {
                ds.images_by_label[r.label].push_back(ds.images.size());
                ds.images.emplace_back(r.data.begin(), r.data.end());
                ds.image_labels.push_back(r.label);
            }
        }
        return ds;
    }

    std::size_t max_video_frames() const {
        std::size_t m = 0;
        for (const Matrix& v : videos) m = std::max(m, v.rows());
        return m;
    }
};

/// A heterogeneous training batch, videos first then images.
struct Batch {
    std::vector<Modality> modalities;
    std::vector<std::uint32_t> labels;
    std::vector<Matrix> inputs;  // m x d0 per video, 1 x d0 per image

    std::size_t size() const noexcept { return inputs.size(); }
    friend bool operator==(const Batch&, const Batch&) = default;
};

namespace detail {

// First `count` entries of a partial Fisher-Yates shuffle of `pool`.
template <class Rng>
std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t> pool, std::size_t count,
                                                  Rng& rng) {
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(count);
    return pool;
}

} // namespace detail

/// Second-order sampling: S subjects without replacement, then P video-image pairs each.
template <class Rng>
Batch sample_batch(const Dataset& ds, std::size_t subjects, std::size_t pairs, Rng& rng,
                   ImageSource image_source = ImageSource::video_frames) {
    if (subjects == 0 || pairs == 0) throw SamplingError("sample_batch: S and P must be positive");
    std::vector<std::uint32_t> eligible;
    for (const auto& [label, vids] : ds.videos_by_label) {
        if (vids.size() < pairs) continue;
        if (image_source == ImageSource::image_records && !ds.images_by_label.contains(label)) continue;
        eligible.push_back(label);
    }
    if (ds.videos_by_label.size() < subjects) {
        throw SamplingError("sample_batch: dataset has " + std::to_string(ds.videos_by_label.size()) +
                            " subjects with videos, batch needs " + std::to_string(subjects));
    }
    if (eligible.size() < subjects) {
        throw SamplingError("sample_batch: only " + std::to_string(eligible.size()) +
                            " subjects own at least " + std::to_string(pairs) +
                            " videos, batch needs " + std::to_string(subjects));
    }
    std::vector<std::size_t> slots(eligible.size());
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    const std::vector<std::size_t> chosen = detail::draw_without_replacement(slots, subjects, rng);

    Batch videos;
    Batch images;
    for (std::size_t slot : chosen) {
        const std::uint32_t label = eligible[slot];
        const std::vector<std::size_t>& owned = ds.videos_by_label.at(label);
        std::vector<std::size_t> local(owned.size());
        std::iota(local.begin(), local.end(), std::size_t{0});
        for (std::size_t pick : detail::draw_without_replacement(local, pairs, rng)) {
            videos.modalities.push_back(Modality::video);
            videos.labels.push_back(label);
            videos.inputs.push_back(ds.videos[owned[pick]]);

            Matrix image(1, ds.input_dim);
            if (image_source == ImageSource::video_frames) {
                std::uniform_int_distribution<std::size_t> which_video(0, owned.size() - 1);
                const Matrix& src = ds.videos[owned[which_video(rng)]];
                std::uniform_int_distribution<std::size_t> which_frame(0, src.rows() - 1);
                const auto row = src.row(which_frame(rng));
                std::copy(row.begin(), row.end(), image.row(0).begin());
            } else {
                const std::vector<std::size_t>& imgs = ds.images_by_label.at(label);
                std::uniform_int_distribution<std::size_t> which(0, imgs.size() - 1);
                const std::vector<double>& src = ds.images[imgs[which(rng)]];
                std::copy(src.begin(), src.end(), image.row(0).begin());
            }
            images.modalities.push_back(Modality::image);
            images.labels.push_back(label);
            images.inputs.push_back(std::move(image));
        }
    }
    for (std::size_t n = 0; n < images.size(); ++n) {
        videos.modalities.push_back(images.modalities[n]);
        videos.labels.push_back(images.labels[n]);
        videos.inputs.push_back(std::move(images.inputs[n]));
    }
    return videos;
}

/// v <- momentum v - lr (g + wd theta), theta <- theta + v. Biases are not decayed.
inline void sgd_step(Model& params, const ModelGrads& grads, ModelGrads& velocity,
                     double learning_rate, double momentum, double weight_decay) {
    auto update = [&](std::span<double> theta, std::span<const double> g, std::span<double> v,
                      double decay, const char* name) {
        if (theta.size() != g.size() || theta.size() != v.size()) {
            throw DimensionError(std::string("sgd_step: shape mismatch in ") + name);
        }
        for (std::size_t i = 0; i < theta.size(); ++i) {
            v[i] = momentum * v[i] - learning_rate * (g[i] + decay * theta[i]);
            theta[i] += v[i];
        }
    };
    update(params.enc_w.data(), grads.enc_w.data(), velocity.enc_w.data(), weight_decay, "enc_w");
    update(params.enc_b, grads.enc_b, velocity.enc_b, 0.0, "enc_b");
    update(params.img_w.data(), grads.img_w.data(), velocity.img_w.data(), weight_decay, "img_w");
    update(params.img_b, grads.img_b, velocity.img_b, 0.0, "img_b");
    update(params.vid_w.data(), grads.vid_w.data(), velocity.vid_w.data(), weight_decay, "vid_w");
    update(params.vid_b, grads.vid_b, velocity.vid_b, 0.0, "vid_b");
}

inline std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0) return requested;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

namespace detail {

// Runs fn(n) for n in [0, count) on up to `threads` workers. fn must only touch slot n.
inline void parallel_for(std::size_t count, std::size_t threads,
                         const std::function<void(std::size_t)>& fn) {
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t n = 0; n < count; ++n) fn(n);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t n = t; n < count; n += threads) fn(n);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace detail

inline std::vector<SampleForward> forward_batch(const Model& model, const Batch& batch,
                                                std::size_t threads = 1) {
    std::vector<SampleForward> out(batch.size());
    detail::parallel_for(batch.size(), resolve_threads(threads), [&](std::size_t n) {
        out[n].modality = batch.modalities[n];
        if (batch.modalities[n] == Modality::image) {
            out[n].image = forward_image_full(batch.inputs[n].row(0), model);
        } else {
            out[n].video = forward_video(batch.inputs[n], model);
        }
    });
    return out;
}

struct BatchEvaluation {
    ObjectiveResult objective;
    ModelGrads grads;
};

/// Objective and parameter gradients for one batch. Per-sample gradients are computed
/// independently and summed in sample order, so the result is the same for any thread count.
inline BatchEvaluation evaluate_batch(const Model& model, const Batch& batch,
                                      const ObjectiveConfig& cfg, SpectrumPolicy policy,
                                      std::size_t threads = 1) {
    const std::size_t workers = resolve_threads(threads);
    const std::vector<SampleForward> fwd = forward_batch(model, batch, workers);
    std::vector<RelaxedCode> codes;
    codes.reserve(fwd.size());
    for (const SampleForward& s : fwd) codes.push_back(s.code());

    BatchEvaluation out{batch_objective(codes, batch.labels, batch.modalities, cfg),
                        ModelGrads::zeros_like(model)};

    std::vector<ModelGrads> per_sample(fwd.size());
    detail::parallel_for(fwd.size(), workers, [&](std::size_t n) {
        per_sample[n] = ModelGrads::zeros_like(model);
        const std::vector<double>& g = out.objective.code_grads[n];
        if (std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; })) return;
        if (fwd[n].modality == Modality::image) {
            backward_image(model, fwd[n].image, g, per_sample[n]);
        } else {
            backward_video(model, fwd[n].video, g, per_sample[n], policy);
        }
    });
    for (const ModelGrads& g : per_sample) out.grads += g;
    return out;
}

struct StepRecord {
    std::size_t step = 0;
    double objective = 0.0;
    double inter = 0.0;             // mean er loss
    double intra_euclidean = 0.0;   // mean e loss
    double intra_riemannian = 0.0;  // mean r loss
    double active_inter = 0.0;
    double active_euclidean = 0.0;
    double active_riemannian = 0.0;
    double grad_norm = 0.0;
};

struct TrainHistory {
    std::vector<StepRecord> steps;
};

struct TrainResult {
    Model model;
    TrainHistory history;
};

namespace detail {

inline void require_finite_grads(const ModelGrads& g, std::size_t step) {
    auto check = [step](std::span<const double> v, const char* name) {
        if (!all_finite(v)) {
            throw NumericalError("step " + std::to_string(step) + ": gradient of " + name +
                                 " is not finite");
        }
    };
    check(g.enc_w.data(), "encoder weights");
    check(g.enc_b, "encoder bias");
    check(g.img_w.data(), "image head weights");
    check(g.img_b, "image head bias");
    check(g.vid_w.data(), "video head weights");
    check(g.vid_b, "video head bias");
}

} // namespace detail

/// Trains from a seeded initialisation. `on_step`, when set, sees every record as it is made.
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg,
                         const std::function<void(const StepRecord&)>& on_step = {}) {
    cfg.validate();
    if (ds.input_dim == 0) throw ConfigError("train: dataset has no descriptor dimension");
    if (ds.max_video_frames() > cfg.encoded_dim) {
        throw DimensionError("train: videos have up to " + std::to_string(ds.max_video_frames()) +
                             " frames but encoded_dim is " + std::to_string(cfg.encoded_dim));
    }
    std::mt19937_64 rng(cfg.seed);
    TrainResult out{init_model({ds.input_dim, cfg.encoded_dim, cfg.code_bits}, rng(), cfg.epsilon,
                               cfg.activation),
                    {}};
    ModelGrads velocity = ModelGrads::zeros_like(out.model);
    const ObjectiveConfig obj = cfg.objective();
    const std::size_t workers = resolve_threads(cfg.threads);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const Batch batch =
            sample_batch(ds, cfg.subjects_per_batch, cfg.pairs_per_subject, rng, cfg.image_source);
        BatchEvaluation eval;
        try {
            eval = evaluate_batch(out.model, batch, obj, cfg.spectrum_policy, workers);
        } catch (const DegenerateSpectrumError& e) {
            throw DegenerateSpectrumError("step " + std::to_string(step) + ": " + e.what());
        }
        detail::require_finite_grads(eval.grads, step);
        const ObjectiveResult& r = eval.objective;
        StepRecord rec{step,
                       r.value,
                       r.inter.mean_loss,
                       r.intra_euclidean.mean_loss,
                       r.intra_riemannian.mean_loss,
                       r.inter.active_fraction(),
                       r.intra_euclidean.active_fraction(),
                       r.intra_riemannian.active_fraction(),
                       std::sqrt(eval.grads.squared_norm())};
        out.history.steps.push_back(rec);
        if (on_step) on_step(rec);
        sgd_step(out.model, eval.grads, velocity, cfg.learning_rate, cfg.momentum, cfg.weight_decay);
    }
    return out;
}

} // namespace spdhash
