#pragma once

// Binary feature archives (.spdh), model checkpoints (.spdm) and the synthetic
// labelled image/video generator. Every multi-byte field is little-endian.
//
// Archive, version 1:
//   char[4] "SPDH" | u32 version | u32 d0 | u64 record count
//   per record: u32 label | u8 modality (0 image, 1 video) | u32 m | f32[m * d0] row-major
//
// Checkpoint, version 1:
//   char[4] "SPDM" | u32 version | u32 d0 | u32 d | u32 K | f64 epsilon | u32 encoder activation
//   f64 arrays: W_enc (d x d0), b_enc (d), W_e (K x d), b_e (K), W_r (K x d^2), b_r (K)

#include <spdhash/errors.hpp>
#include <spdhash/hashnet.hpp>
#include <spdhash/linalg.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace spdhash {

inline constexpr std::size_t kMaxClipFrames = 30;
inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::array<char, 4> kArchiveMagic{'S', 'P', 'D', 'H'};
inline constexpr std::array<char, 4> kCheckpointMagic{'S', 'P', 'D', 'M'};

struct FeatureRecord {
    std::uint32_t label = 0;
    Modality modality = Modality::image;
    std::uint32_t frames = 1;  // m
    std::vector<float> data;   // m x d0, row-major

    /// Widens the stored descriptors to a double matrix.
    Matrix as_matrix(std::size_t input_dim) const {
        std::vector<double> wide(data.begin(), data.end());
        return Matrix(frames, input_dim, std::move(wide));
    }

    friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

struct FeatureArchive {
    std::uint32_t input_dim = 0;  // d0
    std::vector<FeatureRecord> records;

    std::size_t count(Modality m) const {
        return static_cast<std::size_t>(std::count_if(
            records.begin(), records.end(), [m](const FeatureRecord& r) { return r.modality == m; }));
    }

    friend bool operator==(const FeatureArchive&, const FeatureArchive&) = default;
};

/// Splits a long video into balanced clips of at most `max_frames` frames each.
inline std::vector<Matrix> split_into_clips(const Matrix& frames,
                                            std::size_t max_frames = kMaxClipFrames) {
    if (frames.rows() == 0) throw DimensionError("split_into_clips: video has no frames");
    if (max_frames == 0) throw DomainError("split_into_clips: max_frames must be positive");
    const std::size_t m = frames.rows();
    const std::size_t clips = (m + max_frames - 1) / max_frames;
    std::vector<Matrix> out;
    std::size_t start = 0;
    for (std::size_t c = 0; c < clips; ++c) {
        const std::size_t len = m / clips + (c < m % clips ? 1 : 0);
        Matrix clip(len, frames.cols());
        for (std::size_t i = 0; i < len; ++i)
            std::copy(frames.row(start + i).begin(), frames.row(start + i).end(),
                      clip.row(i).begin());
        out.push_back(std::move(clip));
        start += len;
    }
    return out;
}

inline FeatureRecord make_record(std::uint32_t label, Modality modality, const Matrix& frames) {
    FeatureRecord r{label, modality, static_cast<std::uint32_t>(frames.rows()), {}};
    r.data.reserve(frames.size());
    for (double v : frames.data()) r.data.push_back(static_cast<float>(v));
    return r;
}

/// Appends a video, clipped to at most kMaxClipFrames frames per record.
inline void append_video(FeatureArchive& archive, std::uint32_t label, const Matrix& frames) {
    if (frames.cols() != archive.input_dim) {
        throw DimensionError("append_video: descriptor length " + std::to_string(frames.cols()) +
                             " != archive dimension " + std::to_string(archive.input_dim));
    }
    for (const Matrix& clip : split_into_clips(frames))
        archive.records.push_back(make_record(label, Modality::video, clip));
}

inline void append_image(FeatureArchive& archive, std::uint32_t label,
                         std::span<const double> descriptor) {
    if (descriptor.size() != archive.input_dim) {
        throw DimensionError("append_image: descriptor length mismatch");
    }
    Matrix row(1, descriptor.size(), std::vector<double>(descriptor.begin(), descriptor.end()));
    archive.records.push_back(make_record(label, Modality::image, row));
}

namespace detail {

class ByteWriter {
public:
    void magic(const std::array<char, 4>& m) {
        for (char c : m) bytes_.push_back(static_cast<std::uint8_t>(c));
    }
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

    std::vector<std::uint8_t> take() && { return std::move(bytes_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    void need(std::size_t n) const {
        if (remaining() < n) {
            throw TruncatedFileError(std::string(what_) + ": file truncated at byte " +
                                     std::to_string(pos_) + " (needed " + std::to_string(n) +
                                     " more bytes, " + std::to_string(remaining()) + " left)");
        }
    }

    bool magic(const std::array<char, 4>& m) {
        need(4);
        bool ok = true;
        for (std::size_t i = 0; i < 4; ++i) ok = ok && bytes_[pos_ + i] == static_cast<std::uint8_t>(m[i]);
        pos_ += 4;
        return ok;
    }
    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4))); }
    double f64() { return std::bit_cast<double>(get(8)); }

private:
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    const char* what_;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string() + " for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

} // namespace detail

inline void validate_record(const FeatureRecord& r, std::uint32_t input_dim) {
    if (r.frames == 0) throw FormatError("archive record has zero frames");
    if (r.modality == Modality::image && r.frames != 1)
        throw FormatError("image record must have exactly one frame");
    if (r.modality == Modality::video && r.frames > kMaxClipFrames)
        throw FormatError("video record has " + std::to_string(r.frames) + " frames, more than " +
                          std::to_string(kMaxClipFrames));
    if (r.data.size() != static_cast<std::size_t>(r.frames) * input_dim)
        throw FormatError("archive record payload does not match m x d0");
    if (!std::all_of(r.data.begin(), r.data.end(), [](float v) { return std::isfinite(v); }))
        throw FormatError("archive record contains non-finite values");
}

inline std::vector<std::uint8_t> serialize_archive(const FeatureArchive& archive) {
    detail::ByteWriter w;
    w.magic(kArchiveMagic);
    w.u32(kArchiveVersion);
    w.u32(archive.input_dim);
    w.u64(archive.records.size());
    for (const FeatureRecord& r : archive.records) {
        validate_record(r, archive.input_dim);
        w.u32(r.label);
        w.u8(static_cast<std::uint8_t>(r.modality));
        w.u32(r.frames);
        for (float v : r.data) w.f32(v);
    }
    return std::move(w).take();
}

inline FeatureArchive parse_archive(std::span<const std::uint8_t> bytes) {
    detail::ByteReader rd(bytes, "archive");
    if (!rd.magic(kArchiveMagic)) throw CorruptHeaderError("archive: bad magic (expected SPDH)");
    const std::uint32_t version = rd.u32();
    if (version != kArchiveVersion) {
        throw VersionMismatchError("archive: unsupported version " + std::to_string(version));
    }
    FeatureArchive archive;
    archive.input_dim = rd.u32();
    if (archive.input_dim == 0) throw CorruptHeaderError("archive: descriptor dimension is zero");
    const std::uint64_t count = rd.u64();
    // Smallest possible record: header (9 bytes) plus one frame.
    const std::uint64_t min_record = 9 + 4ULL * archive.input_dim;
    if (count > rd.remaining() / min_record) {
        throw TruncatedFileError("archive: header declares " + std::to_string(count) +
                                 " records but only " + std::to_string(rd.remaining()) +
                                 " bytes follow");
    }
    archive.records.reserve(count);
    for (std::uint64_t n = 0; n < count; ++n) {
        FeatureRecord r;
        r.label = rd.u32();
        const std::uint8_t mod = rd.u8();
        if (mod > 1) throw FormatError("archive: invalid modality flag " + std::to_string(mod));
        r.modality = static_cast<Modality>(mod);
        r.frames = rd.u32();
        const std::uint64_t values = static_cast<std::uint64_t>(r.frames) * archive.input_dim;
        rd.need(values * 4);
        r.data.resize(values);
        for (float& v : r.data) v = rd.f32();
        validate_record(r, archive.input_dim);
        archive.records.push_back(std::move(r));
    }
    if (rd.remaining() != 0) {
        throw FormatError("archive: " + std::to_string(rd.remaining()) + " trailing bytes");
    }
    return archive;
}

inline void write_archive(const std::filesystem::path& path, const FeatureArchive& archive) {
    detail::write_file(path, serialize_archive(archive));
}

inline FeatureArchive read_archive(const std::filesystem::path& path) {
    return parse_archive(detail::read_file(path));
}

inline std::vector<std::uint8_t> serialize_checkpoint(const Model& model) {
    model.validate();
    detail::ByteWriter w;
    w.magic(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(model.input_dim()));
    w.u32(static_cast<std::uint32_t>(model.encoded_dim()));
    w.u32(static_cast<std::uint32_t>(model.code_bits()));
    w.f64(model.epsilon);
    w.u32(static_cast<std::uint32_t>(model.activation));
    for (double v : model.enc_w.data()) w.f64(v);
    for (double v : model.enc_b) w.f64(v);
    for (double v : model.img_w.data()) w.f64(v);
    for (double v : model.img_b) w.f64(v);
    for (double v : model.vid_w.data()) w.f64(v);
    for (double v : model.vid_b) w.f64(v);
    return std::move(w).take();
}

inline Model parse_checkpoint(std::span<const std::uint8_t> bytes) {
    detail::ByteReader rd(bytes, "checkpoint");
    if (!rd.magic(kCheckpointMagic)) throw CorruptHeaderError("checkpoint: bad magic (expected SPDM)");
    const std::uint32_t version = rd.u32();
    if (version != kCheckpointVersion) {
        throw VersionMismatchError("checkpoint: unsupported version " + std::to_string(version));
    }
    const std::uint64_t d0 = rd.u32();
    const std::uint64_t d = rd.u32();
    const std::uint64_t k = rd.u32();
    const double epsilon = rd.f64();
    const std::uint32_t act = rd.u32();
    if (d0 == 0 || d == 0 || k == 0) throw CorruptHeaderError("checkpoint: zero dimension");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw CorruptHeaderError("checkpoint: epsilon is not a positive number");
    if (act > 1) throw CorruptHeaderError("checkpoint: unknown encoder activation " + std::to_string(act));
    const std::uint64_t expected = 8 * (d * d0 + d + k * d + k + k * d * d + k);
    if (rd.remaining() < expected) {
        throw TruncatedFileError("checkpoint: expected " + std::to_string(expected) +
                                 " parameter bytes, found " + std::to_string(rd.remaining()));
    }
    if (rd.remaining() > expected) {
        throw FormatError("checkpoint: " + std::to_string(rd.remaining() - expected) +
                          " trailing bytes");
    }
    Model m = make_zero_model({d0, d, k}, epsilon, static_cast<EncoderActivation>(act));
    auto fill = [&rd](std::span<double> dst) {
        for (double& v : dst) {
            v = rd.f64();
            if (!std::isfinite(v)) throw FormatError("checkpoint: non-finite parameter");
        }
    };
    fill(m.enc_w.data());
    fill(m.enc_b);
    fill(m.img_w.data());
    fill(m.img_b);
    fill(m.vid_w.data());
    fill(m.vid_b);
    return m;
}

inline void write_checkpoint(const std::filesystem::path& path, const Model& model) {
    detail::write_file(path, serialize_checkpoint(model));
}

inline Model read_checkpoint(const std::filesystem::path& path) {
    return parse_checkpoint(detail::read_file(path));
}

struct SynthConfig {
    std::uint32_t classes = 10;
    std::uint32_t videos_per_class = 20;
    std::uint32_t frames_per_video = 15;
    std::uint32_t input_dim = 32;
    double center_spread = 5.0;       // std-dev of class centres per coordinate
    double within_class_noise = 1.5;  // std-dev of the per-video offset from its class centre
    double frame_drift = 0.5;         // std-dev of per-frame jitter within a video
    std::uint32_t images_per_video = 1;
    std::uint32_t test_videos_per_class = 0;
    std::uint32_t test_images_per_video = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (classes < 2) throw ConfigError("synth: need at least 2 classes");
        if (videos_per_class == 0) throw ConfigError("synth: videos_per_class must be positive");
        if (frames_per_video == 0) throw ConfigError("synth: frames_per_video must be positive");
        if (input_dim == 0) throw ConfigError("synth: input_dim must be positive");
        if (!(center_spread > 0.0) || !(within_class_noise > 0.0) || !(frame_drift > 0.0))
            throw ConfigError("synth: all scales must be positive");
        if (images_per_video > frames_per_video || test_images_per_video > frames_per_video)
            throw ConfigError("synth: cannot sample more images than frames per video");
    }
};

struct SynthOutput {
    FeatureArchive train;
    FeatureArchive test;  // empty unless test_videos_per_class > 0
};

/// Class centres, per-video offsets and per-frame jitter, all Gaussian. Image
/// records are distinct frames sampled from each video and stored after it.
inline SynthOutput synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t d0 = cfg.input_dim;

    std::vector<std::vector<double>> centers(cfg.classes, std::vector<double>(d0));
    for (auto& c : centers)
        for (double& v : c) v = cfg.center_spread * normal(rng);

    auto emit = [&](FeatureArchive& archive, std::uint32_t per_class, std::uint32_t images) {
        archive.input_dim = cfg.input_dim;
        for (std::uint32_t label = 0; label < cfg.classes; ++label) {
            for (std::uint32_t v = 0; v < per_class; ++v) {
                std::vector<double> base = centers[label];
                for (double& x : base) x += cfg.within_class_noise * normal(rng);
                Matrix frames(cfg.frames_per_video, d0);
                for (std::size_t i = 0; i < frames.rows(); ++i)
                    for (std::size_t j = 0; j < d0; ++j)
                        frames(i, j) = base[j] + cfg.frame_drift * normal(rng);
                append_video(archive, label, frames);

                std::vector<std::size_t> pick(frames.rows());
                std::iota(pick.begin(), pick.end(), std::size_t{0});
                for (std::uint32_t s = 0; s < images; ++s) {
                    std::uniform_int_distribution<std::size_t> choose(s, pick.size() - 1);
                    std::swap(pick[s], pick[choose(rng)]);
                    append_image(archive, label, frames.row(pick[s]));
                }
            }
        }
    };
    SynthOutput out;
    emit(out.train, cfg.videos_per_class, cfg.images_per_video);
    out.test.input_dim = cfg.input_dim;
    if (cfg.test_videos_per_class > 0) emit(out.test, cfg.test_videos_per_class, cfg.test_images_per_video);
    return out;
}

} // namespace spdhash
