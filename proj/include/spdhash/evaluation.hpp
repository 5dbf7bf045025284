#pragma once

// Glue between archives, a trained model and the retrieval engine: encode every
// record, split into query/database sides per scenario, score.

#include <spdhash/dataio.hpp>
#include <spdhash/hashnet.hpp>
#include <spdhash/retrieval.hpp>
#include <spdhash/trainer.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spdhash {

enum class Scenario : std::uint8_t { image_to_video, video_to_image, video_to_video };

inline std::optional<Scenario> parse_scenario(std::string_view s) {
    if (s == "i2v") return Scenario::image_to_video;
    if (s == "v2i") return Scenario::video_to_image;
    if (s == "v2v") return Scenario::video_to_video;
    return std::nullopt;
}

inline const char* to_string(Scenario s) {
    switch (s) {
    case Scenario::image_to_video: return "i2v";
    case Scenario::video_to_image: return "v2i";
    case Scenario::video_to_video: return "v2v";
    }
    return "?";
}

inline Modality query_modality(Scenario s) {
    return s == Scenario::image_to_video ? Modality::image : Modality::video;
}

inline Modality database_modality(Scenario s) {
    return s == Scenario::video_to_image ? Modality::image : Modality::video;
}

struct EncodedRecord {
    std::uint64_t id = 0;  // record position in its archive
    Modality modality = Modality::image;
    std::uint32_t label = 0;
    BinaryCode code;
};

/// Binary codes for every record, images through the image head and videos through the video head.
inline std::vector<EncodedRecord> encode_archive(const Model& model, const FeatureArchive& archive,
                                                 std::size_t threads = 1) {
    if (archive.input_dim != model.input_dim()) {
        throw DimensionError("encode_archive: archive dimension " + std::to_string(archive.input_dim) +
                             " != model input dimension " + std::to_string(model.input_dim()));
    }
    std::vector<EncodedRecord> out(archive.records.size());
    detail::parallel_for(out.size(), resolve_threads(threads), [&](std::size_t n) {
        const FeatureRecord& r = archive.records[n];
        const Matrix x = r.as_matrix(archive.input_dim);
        const RelaxedCode code = r.modality == Modality::image ? forward_image(x.row(0), model)
                                                               : forward_video(x, model).code;
        out[n] = {n, r.modality, r.label, binarize(code)};
    });
    return out;
}

inline QuerySet select_queries(std::span<const EncodedRecord> encoded, Modality modality) {
    QuerySet q;
    for (const EncodedRecord& e : encoded) {
        if (e.modality != modality) continue;
        q.codes.push_back(e.code);
        q.labels.push_back(e.label);
        q.ids.push_back(e.id);
    }
    return q;
}

inline RetrievalIndex build_index(std::span<const EncodedRecord> encoded, Modality modality) {
    QuerySet q = select_queries(encoded, modality);
    return RetrievalIndex(std::move(q.codes), std::move(q.labels), std::move(q.ids), modality);
}

struct ScenarioReport {
    Scenario scenario = Scenario::image_to_video;
    QuerySet queries;
    std::vector<double> average_precisions;
    double map = 0.0;
    std::vector<PrPoint> pr;
};

inline ScenarioReport evaluate_scenario(const Model& model, const FeatureArchive& query_archive,
                                        const FeatureArchive& db_archive, Scenario scenario,
                                        std::size_t threads = 1) {
    const std::vector<EncodedRecord> q_enc = encode_archive(model, query_archive, threads);
    const std::vector<EncodedRecord> db_enc = encode_archive(model, db_archive, threads);
    ScenarioReport rep;
    rep.scenario = scenario;
    rep.queries = select_queries(q_enc, query_modality(scenario));
    if (rep.queries.size() == 0) {
        throw DomainError(std::string("evaluate: query archive has no ") +
                          to_string(query_modality(scenario)) + " records");
    }
    const RetrievalIndex index = build_index(db_enc, database_modality(scenario));
    rep.average_precisions = query_average_precisions(rep.queries, index);
    double s = 0.0;
    for (double a : rep.average_precisions) s += a;
    rep.map = s / static_cast<double>(rep.average_precisions.size());
    rep.pr = pr_curve(rep.queries, index);
    return rep;
}

} // namespace spdhash
