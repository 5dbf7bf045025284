#pragma once

// JSON front-end for SynthConfig and TrainConfig. Unknown keys are rejected so
// typos do not silently fall back to defaults.

#include <spdhash/covpool.hpp>
#include <spdhash/dataio.hpp>
#include <spdhash/errors.hpp>
#include <spdhash/trainer.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

namespace spdhash {

using Json = nlohmann::json;

inline Json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
}

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& known, const char* what) {
    if (!j.is_object()) throw ConfigError(std::string(what) + " config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw ConfigError(std::string(what) + " config: unknown key \"" + key + "\"");
    }
}

template <class T>
void read_key(const Json& j, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config key \"") + key + "\": " + e.what());
    }
}

} // namespace detail

inline SpectrumPolicy parse_spectrum_policy(const std::string& s) {
    if (s == "error") return SpectrumPolicy::error;
    if (s == "clamp") return SpectrumPolicy::clamp;
    throw ConfigError("spectrum policy must be \"error\" or \"clamp\", got \"" + s + "\"");
}

inline EncoderActivation parse_activation(const std::string& s) {
    if (s == "identity" || s == "affine") return EncoderActivation::identity;
    if (s == "tanh") return EncoderActivation::tanh;
    throw ConfigError("encoder activation must be \"identity\" or \"tanh\", got \"" + s + "\"");
}

inline ImageSource parse_image_source(const std::string& s) {
    if (s == "video_frames") return ImageSource::video_frames;
    if (s == "image_records") return ImageSource::image_records;
    throw ConfigError("image source must be \"video_frames\" or \"image_records\", got \"" + s + "\"");
}

inline SynthConfig synth_config_from_json(const Json& j) {
    detail::reject_unknown_keys(j,
                                {"classes", "videos_per_class", "frames_per_video", "input_dim",
                                 "center_spread", "within_class_noise", "frame_drift",
                                 "images_per_video", "test_videos_per_class",
                                 "test_images_per_video", "seed"},
                                "synth");
    SynthConfig c;
    detail::read_key(j, "classes", c.classes);
    detail::read_key(j, "videos_per_class", c.videos_per_class);
    detail::read_key(j, "frames_per_video", c.frames_per_video);
    detail::read_key(j, "input_dim", c.input_dim);
    detail::read_key(j, "center_spread", c.center_spread);
    detail::read_key(j, "within_class_noise", c.within_class_noise);
    detail::read_key(j, "frame_drift", c.frame_drift);
    detail::read_key(j, "images_per_video", c.images_per_video);
    detail::read_key(j, "test_videos_per_class", c.test_videos_per_class);
    detail::read_key(j, "test_images_per_video", c.test_images_per_video);
    detail::read_key(j, "seed", c.seed);
    c.validate();
    return c;
}

inline TrainConfig train_config_from_json(const Json& j) {
    detail::reject_unknown_keys(j,
                                {"learning_rate", "momentum", "weight_decay", "steps",
                                 "subjects_per_batch", "pairs_per_subject", "alpha", "lambda1",
                                 "lambda2", "K", "encoded_dim", "epsilon", "seed",
                                 "spectrum_policy", "encoder_activation", "image_source", "threads"},
                                "train");
    TrainConfig c;
    detail::read_key(j, "learning_rate", c.learning_rate);
    detail::read_key(j, "momentum", c.momentum);
    detail::read_key(j, "weight_decay", c.weight_decay);
    detail::read_key(j, "steps", c.steps);
    detail::read_key(j, "subjects_per_batch", c.subjects_per_batch);
    detail::read_key(j, "pairs_per_subject", c.pairs_per_subject);
    detail::read_key(j, "alpha", c.alpha);
    detail::read_key(j, "lambda1", c.lambda1);
    detail::read_key(j, "lambda2", c.lambda2);
    detail::read_key(j, "K", c.code_bits);
    detail::read_key(j, "encoded_dim", c.encoded_dim);
    detail::read_key(j, "epsilon", c.epsilon);
    detail::read_key(j, "seed", c.seed);
    detail::read_key(j, "threads", c.threads);
    std::string s;
    if (j.contains("spectrum_policy")) {
        detail::read_key(j, "spectrum_policy", s);
        c.spectrum_policy = parse_spectrum_policy(s);
    }
    if (j.contains("encoder_activation")) {
        detail::read_key(j, "encoder_activation", s);
        c.activation = parse_activation(s);
    }
    if (j.contains("image_source")) {
        detail::read_key(j, "image_source", s);
        c.image_source = parse_image_source(s);
    }
    c.validate();
    return c;
}

} // namespace spdhash
