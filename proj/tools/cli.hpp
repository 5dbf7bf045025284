#pragma once

// spdhash command line: synth, train, encode, retrieve, eval, gradcheck.
// Exit codes: 0 success, 1 runtime error (one line on stderr), 2 usage error.

#include <spdhash/config.hpp>
#include <spdhash/covpool.hpp>
#include <spdhash/dataio.hpp>
#include <spdhash/evaluation.hpp>
#include <spdhash/trainer.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace spdhash::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr double kGradCheckTolerance = 1e-4;

namespace detail {

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path + " for writing");
    return out;
}

inline Scenario scenario_or_throw(const std::string& mode) {
    const std::optional<Scenario> s = parse_scenario(mode);
    if (!s) throw ConfigError("unknown mode \"" + mode + "\" (expected i2v, v2i or v2v)");
    return *s;
}

struct TrainOverrides {
    std::optional<double> alpha, lambda1, lambda2, epsilon, lr, momentum, weight_decay;
    std::optional<std::size_t> bits, steps, subjects, pairs, encoded_dim, threads;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> policy, activation, image_source;

    void apply(TrainConfig& c) const {
        if (alpha) c.alpha = *alpha;
        if (lambda1) c.lambda1 = *lambda1;
        if (lambda2) c.lambda2 = *lambda2;
        if (epsilon) c.epsilon = *epsilon;
        if (lr) c.learning_rate = *lr;
        if (momentum) c.momentum = *momentum;
        if (weight_decay) c.weight_decay = *weight_decay;
        if (bits) c.code_bits = *bits;
        if (steps) c.steps = *steps;
        if (subjects) c.subjects_per_batch = *subjects;
        if (pairs) c.pairs_per_subject = *pairs;
        if (encoded_dim) c.encoded_dim = *encoded_dim;
        if (threads) c.threads = *threads;
        if (seed) c.seed = *seed;
        if (policy) c.spectrum_policy = parse_spectrum_policy(*policy);
        if (activation) c.activation = parse_activation(*activation);
        if (image_source) c.image_source = parse_image_source(*image_source);
        c.validate();
    }
};

inline void write_history_csv(std::ostream& out, const TrainHistory& h) {
    out << "step,J,J_er,J_e,J_r,active_er,active_e,active_r\n" << std::setprecision(12);
    for (const StepRecord& r : h.steps) {
        out << r.step << ',' << r.objective << ',' << r.inter << ',' << r.intra_euclidean << ','
            << r.intra_riemannian << ',' << r.active_inter << ',' << r.active_euclidean << ','
            << r.active_riemannian << '\n';
    }
}

} // namespace detail

/// Runs one command line. argv[0] is the program name.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    CLI::App app{"Heterogeneous image/video hashing with SPD covariance pooling", "spdhash"};
    app.require_subcommand(1);
    app.allow_extras(false);

    // synth
    std::string synth_config, synth_out, synth_test_out;
    std::optional<std::uint64_t> synth_seed;
    auto* synth = app.add_subcommand("synth", "generate a synthetic labelled archive");
    synth->add_option("--config", synth_config, "SynthConfig JSON file")->check(CLI::ExistingFile);
    synth->add_option("--out", synth_out, "output archive (.spdh)")->required();
    synth->add_option("--test-out", synth_test_out, "held-out archive (needs test_videos_per_class > 0)");
    synth->add_option("--seed", synth_seed, "overrides the config seed");

    // train
    std::string train_data, train_config, train_out, train_history;
    detail::TrainOverrides ov;
    auto* train_cmd = app.add_subcommand("train", "train a model on an archive");
    train_cmd->add_option("--data", train_data, "training archive")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--config", train_config, "TrainConfig JSON file")->check(CLI::ExistingFile);
    train_cmd->add_option("--out", train_out, "output checkpoint (.spdm)")->required();
    train_cmd->add_option("--history", train_history, "per-step history CSV");
    train_cmd->add_option("--alpha", ov.alpha, "triplet margin");
    train_cmd->add_option("--lambda1", ov.lambda1, "weight of the image-image term");
    train_cmd->add_option("--lambda2", ov.lambda2, "weight of the video-video term");
    train_cmd->add_option("-K,--bits", ov.bits, "code length");
    train_cmd->add_option("--epsilon", ov.epsilon, "pooling regulariser");
    train_cmd->add_option("--lr", ov.lr, "learning rate");
    train_cmd->add_option("--momentum", ov.momentum, "SGD momentum");
    train_cmd->add_option("--weight-decay", ov.weight_decay, "weight decay on weights");
    train_cmd->add_option("--subjects", ov.subjects, "subjects per batch (S)");
    train_cmd->add_option("--pairs", ov.pairs, "video-image pairs per subject (P)");
    train_cmd->add_option("--steps", ov.steps, "SGD steps");
    train_cmd->add_option("--encoded-dim", ov.encoded_dim, "encoder output dimension d");
    train_cmd->add_option("--threads", ov.threads, "worker threads (0 = all cores)");
    train_cmd->add_option("--seed", ov.seed, "RNG seed");
    train_cmd->add_option("--policy", ov.policy, "degenerate spectrum policy: error|clamp");
    train_cmd->add_option("--activation", ov.activation, "encoder activation: identity|tanh");
    train_cmd->add_option("--image-source", ov.image_source, "video_frames|image_records");

    // encode
    std::string enc_model, enc_data, enc_out;
    std::optional<std::uint64_t> enc_seed;
    auto* encode = app.add_subcommand("encode", "write binary codes for every record");
    encode->add_option("--model", enc_model, "checkpoint")->required()->check(CLI::ExistingFile);
    encode->add_option("--data", enc_data, "archive")->required()->check(CLI::ExistingFile);
    encode->add_option("--out", enc_out, "codes CSV")->required();
    encode->add_option("--seed", enc_seed, "accepted for uniformity; encoding is deterministic");

    // retrieve / eval share inputs
    std::string r_model, r_query, r_db, r_mode, r_out;
    std::size_t r_topk = 10;
    std::optional<std::uint64_t> r_seed;
    auto* retrieve = app.add_subcommand("retrieve", "rank the database for every query");
    retrieve->add_option("--model", r_model, "checkpoint")->required()->check(CLI::ExistingFile);
    retrieve->add_option("--query-data", r_query, "query archive")->required()->check(CLI::ExistingFile);
    retrieve->add_option("--db-data", r_db, "database archive")->required()->check(CLI::ExistingFile);
    retrieve->add_option("--mode", r_mode, "i2v|v2i|v2v")->required();
    retrieve->add_option("--topk", r_topk, "results per query")->check(CLI::PositiveNumber);
    retrieve->add_option("--out", r_out, "CSV output (default stdout)");
    retrieve->add_option("--seed", r_seed, "accepted for uniformity; retrieval is deterministic");

    std::string e_model, e_query, e_db, e_mode, e_map, e_pr, e_ap;
    std::optional<std::uint64_t> e_seed;
    auto* eval = app.add_subcommand("eval", "mAP and precision-recall for one scenario");
    eval->add_option("--model", e_model, "checkpoint")->required()->check(CLI::ExistingFile);
    eval->add_option("--query-data", e_query, "query archive")->required()->check(CLI::ExistingFile);
    eval->add_option("--db-data", e_db, "database archive")->required()->check(CLI::ExistingFile);
    eval->add_option("--mode", e_mode, "i2v|v2i|v2v")->required();
    eval->add_option("--out-map", e_map, "mAP CSV")->required();
    eval->add_option("--out-pr", e_pr, "precision-recall CSV")->required();
    eval->add_option("--out-ap", e_ap, "per-query AP CSV");
    eval->add_option("--seed", e_seed, "accepted for uniformity; evaluation is deterministic");

    std::string g_shape, g_loss = "sum-of-squares";
    double g_epsilon = kDefaultEpsilon;
    std::uint64_t g_seed = 0;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the pooling backward pass");
    gradcheck->add_option("--shape", g_shape, "m,d")->required();
    gradcheck->add_option("--epsilon", g_epsilon, "pooling regulariser");
    gradcheck->add_option("--seed", g_seed, "seed for the random feature matrix");
    gradcheck->add_option("--loss", g_loss, "sum-of-squares|random-linear");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << " (see --help)\n";
        return kExitUsage;
    }

    try {
        if (*synth) {
            SynthConfig cfg = synth_config.empty() ? SynthConfig{} : synth_config_from_json(load_json_file(synth_config));
            if (synth_seed) cfg.seed = *synth_seed;
            const SynthOutput data = synth_generate(cfg);
            write_archive(synth_out, data.train);
            if (!synth_test_out.empty()) {
                if (cfg.test_videos_per_class == 0)
                    throw ConfigError("--test-out needs test_videos_per_class > 0 in the config");
                write_archive(synth_test_out, data.test);
            }
            out << "wrote " << data.train.records.size() << " records to " << synth_out << "\n";
        } else if (*train_cmd) {
            TrainConfig cfg = train_config.empty() ? TrainConfig{} : train_config_from_json(load_json_file(train_config));
            ov.apply(cfg);
            const Dataset ds = Dataset::from_archive(read_archive(train_data));
            const auto t0 = std::chrono::steady_clock::now();
            const TrainResult res = train(ds, cfg);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            write_checkpoint(train_out, res.model);
            if (!train_history.empty()) {
                std::ofstream h = detail::open_output(train_history);
                detail::write_history_csv(h, res.history);
            }
            out << "trained " << cfg.steps << " steps in " << std::fixed << std::setprecision(2) << secs << " s";
            if (!res.history.steps.empty()) {
                out << std::setprecision(6) << ", J " << res.history.steps.front().objective << " -> "
                    << res.history.steps.back().objective;
            }
            out << "\n";
        } else if (*encode) {
            const Model model = read_checkpoint(enc_model);
            const std::vector<EncodedRecord> codes = encode_archive(model, read_archive(enc_data));
            std::ofstream f = detail::open_output(enc_out);
            f << "id,modality,label,code\n";
            for (const EncodedRecord& e : codes)
                f << e.id << ',' << to_string(e.modality) << ',' << e.label << ',' << e.code.to_string() << '\n';
        } else if (*retrieve) {
            const Scenario scenario = detail::scenario_or_throw(r_mode);
            const Model model = read_checkpoint(r_model);
            const auto q_enc = encode_archive(model, read_archive(r_query));
            const auto db_enc = encode_archive(model, read_archive(r_db));
            const QuerySet queries = select_queries(q_enc, query_modality(scenario));
            const RetrievalIndex index = build_index(db_enc, database_modality(scenario));
            std::ofstream file;
            if (!r_out.empty()) file = detail::open_output(r_out);
            std::ostream& dst = r_out.empty() ? out : file;
            dst << "query_id,query_label,rank,db_id,db_label,distance\n";
            for (std::size_t n = 0; n < queries.size(); ++n) {
                const RankedResult ranked = index.query(queries.codes[n]);
                for (std::size_t k = 0; k < std::min(r_topk, ranked.size()); ++k) {
                    dst << queries.ids[n] << ',' << queries.labels[n] << ',' << k + 1 << ','
                        << ranked[k].id << ',' << ranked[k].label << ',' << ranked[k].distance << '\n';
                }
            }
        } else if (*eval) {
            const Scenario scenario = detail::scenario_or_throw(e_mode);
            const Model model = read_checkpoint(e_model);
            const ScenarioReport rep =
                evaluate_scenario(model, read_archive(e_query), read_archive(e_db), scenario);
            {
                std::ofstream f = detail::open_output(e_map);
                f << "mode,queries,map\n" << std::setprecision(12);
                f << to_string(scenario) << ',' << rep.queries.size() << ',' << rep.map << '\n';
            }
            {
                std::ofstream f = detail::open_output(e_pr);
                write_pr_csv(f, rep.pr);
            }
            if (!e_ap.empty()) {
                std::ofstream f = detail::open_output(e_ap);
                write_ap_csv(f, rep.queries, rep.average_precisions);
            }
            out << to_string(scenario) << " mAP " << std::setprecision(6) << rep.map << " over "
                << rep.queries.size() << " queries\n";
        } else if (*gradcheck) {
            std::size_t m = 0;
            std::size_t d = 0;
            char comma = 0;
            std::istringstream shape(g_shape);
            if (!(shape >> m >> comma >> d) || comma != ',' || !shape.eof() || m == 0 || d == 0) {
                err << "usage error: --shape expects m,d with positive integers\n";
                return kExitUsage;
            }
            ProbeLoss probe;
            if (g_loss == "sum-of-squares") probe = ProbeLoss::sum_of_squares;
            else if (g_loss == "random-linear") probe = ProbeLoss::random_linear;
            else {
                err << "usage error: --loss expects sum-of-squares or random-linear\n";
                return kExitUsage;
            }
            std::mt19937_64 rng(g_seed);
            std::normal_distribution<double> normal(0.0, 1.0);
            Matrix features(m, d);
            for (double& v : features.data()) v = normal(rng);
            const GradCheckReport rep = grad_check(features, g_epsilon, probe, g_seed + 1);
            out << "max_rel_err " << std::scientific << std::setprecision(6) << rep.max_rel_err
                << " at (" << rep.row << "," << rep.col << ")\n";
            if (!(rep.max_rel_err < kGradCheckTolerance)) {
                err << "error: gradient check failed, max relative error " << rep.max_rel_err
                    << " >= " << kGradCheckTolerance << "\n";
                return kExitRuntime;
            }
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

} // namespace spdhash::cli
