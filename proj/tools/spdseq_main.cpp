#include <CLI11.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "spdseq/checkpoint.hpp"
#include "spdseq/harness.hpp"
#include "spdseq/hash.hpp"
#include "spdseq/model.hpp"
#include "spdseq/rng.hpp"
#include "spdseq/run_config.hpp"
#include "spdseq/synthetic.hpp"
#include "spdseq/token_cache.hpp"

namespace fs = std::filesystem;
using namespace spdseq;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

fs::path cache_path(const fs::path& data_dir, const std::string& rec_id,
                    const std::string& tag) {
    return data_dir / rec_id / ("tokens_" + tag + ".spdtok");
}

std::vector<std::string> discover_recordings(const fs::path& data_dir) {
    std::vector<std::string> ids;
    if (!fs::is_directory(data_dir)) {
        throw ConfigError("data_dir does not exist: " + data_dir.string());
    }
    for (const auto& entry : fs::directory_iterator(data_dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / kRecordingHeaderFile)) {
            ids.push_back(entry.path().filename().string());
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

harness::RecordingData load_recording_data(const fs::path& data_dir,
                                           const std::string& rec_id,
                                           const std::string& tag) {
    const fs::path cpath = cache_path(data_dir, rec_id, tag);
    if (!fs::exists(cpath)) {
        throw IoError("missing cache " + cpath.string() + " (run `spdseq preprocess` first)");
    }
    const Recording rec = read_recording(data_dir / rec_id);
    return {rec_id, cache_read(cpath), rec.labels};
}

std::vector<harness::RecordingData> load_fold_corpus(const RunConfig& cfg) {
    std::vector<harness::RecordingData> corpus;
    const std::string tag = cfg.effective_cache_tag();
    std::vector<std::string> ids = cfg.fold.train;
    ids.insert(ids.end(), cfg.fold.validation.begin(), cfg.fold.validation.end());
    ids.insert(ids.end(), cfg.fold.test.begin(), cfg.fold.test.end());
    for (const auto& id : ids) corpus.push_back(load_recording_data(cfg.data_dir, id, tag));
    return corpus;
}

std::vector<std::pair<std::string, std::string>> hash_caches(const RunConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> hashes;
    const std::string tag = cfg.effective_cache_tag();
    std::vector<std::string> ids = cfg.fold.train;
    ids.insert(ids.end(), cfg.fold.validation.begin(), cfg.fold.validation.end());
    ids.insert(ids.end(), cfg.fold.test.begin(), cfg.fold.test.end());
    for (const auto& id : ids) {
        hashes.emplace_back(id, sha256_file(cache_path(cfg.data_dir, id, tag)));
    }
    return hashes;
}

void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(12);
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
        out << "\n";
    }
}

int run_synth(int classes, int recordings, int epochs, std::uint64_t seed, int fs,
              int signals, const fs::path& out) {
    SyntheticSpec spec;
    spec.classes = classes;
    spec.recordings = recordings;
    spec.epochs_per_recording = epochs;
    spec.seed = seed;
    spec.fs = fs;
    spec.signals = signals;
    const auto recs = generate_synthetic_dataset(spec);
    fs::create_directories(out);
    for (const auto& rec : recs) {
        write_recording(out / rec.id, rec);
        std::printf("wrote %s (%d epochs, %d signals, %d Hz)\n",
                    (out / rec.id).string().c_str(), rec.num_epochs(), rec.num_signals(),
                    rec.fs);
    }
    return kExitOk;
}

int run_preprocess(const fs::path& config_path, int jobs, bool heatmaps) {
    const RunConfig cfg = parse_run_config(config_path);
    cfg.enrichment.validate();
    const std::string tag = cfg.effective_cache_tag();
    const auto ids = discover_recordings(cfg.data_dir);
    if (ids.empty()) throw ConfigError("no recordings under " + cfg.data_dir.string());

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex error_mutex;

    const auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= ids.size() || failed.load()) return;
            try {
                const Recording rec = read_recording(cfg.data_dir / ids[i]);
                std::vector<Eigen::MatrixXd> means;
                const TokenCache cache =
                    preprocess_recording(rec, cfg.enrichment, heatmaps ? &means : nullptr);
                cache_write(cache_path(cfg.data_dir, ids[i], tag), cache);
                if (heatmaps) {
                    for (std::size_t c = 0; c < means.size(); ++c) {
                        write_matrix_csv(cfg.data_dir / ids[i] /
                                             ("heatmap_" + tag + "_ch" + std::to_string(c) +
                                              ".csv"),
                                         means[c]);
                    }
                }
                std::printf("cached %s [%s]\n", ids[i].c_str(), tag.c_str());
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!failed.exchange(true)) first_error = e.what();
            }
        }
    };

    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failed.load()) throw Error(first_error);
    return kExitOk;
}

int run_train(const fs::path& config_path) {
    const RunConfig cfg = parse_run_config(config_path);
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    write_manifest(cfg.out_dir / "manifest.txt", cfg, hash_caches(cfg));

    const auto corpus = load_fold_corpus(cfg);
    const auto result =
        harness::train(corpus, cfg.fold, cfg.model, cfg.train, cfg.out_dir / "model.ckpt");
    harness::save_metrics(cfg.out_dir / "validation_metrics.txt", result.validation);

    std::printf("trained %d passes (best %d), validation MF1 %.2f\n", result.passes_run,
                result.best_pass, result.validation.mf1);
    std::printf("checkpoint: %s\n", result.checkpoint.string().c_str());
    return kExitOk;
}

int run_eval(const fs::path& config_path, const fs::path& checkpoint, int clip,
             const std::string& out_name) {
    const RunConfig cfg = parse_run_config(config_path);
    cfg.model.validate();
    const std::string tag = cfg.effective_cache_tag();
    std::vector<harness::RecordingData> recs;
    for (const auto& id : cfg.fold.test) {
        recs.push_back(load_recording_data(cfg.data_dir, id, tag));
    }
    const fs::path ckpt = checkpoint.empty() ? cfg.out_dir / "model.ckpt" : checkpoint;
    const int effective_clip = clip >= 0 ? clip : cfg.train.clip_test;
    const auto report = harness::evaluate(ckpt, recs, cfg.model, effective_clip);
    fs::create_directories(cfg.out_dir);
    harness::save_metrics(cfg.out_dir / out_name, report);
    std::printf("test MF1 %.2f accuracy %.2f over %d epochs\n", report.mf1, report.accuracy,
                static_cast<int>(report.confusion.sum()));
    return kExitOk;
}

int run_gradcheck(bool tiny_model) {
    int failures = 0;
    const auto show = [&failures](const char* name, const ad::GradCheckReport& report) {
        std::printf("%-34s %s (worst %.3e, tol %.0e)\n", name,
                    report.passed ? "PASS" : "FAIL", report.worst, report.tolerance);
        if (!report.passed) ++failures;
    };
    Rng rng(0xFD);

    const auto tensor = [&rng](int r, int c, double scale = 1.0) {
        ad::TensorData t(ad::Shape{r, c});
        for (auto& v : t.data) v = scale * rng.normal();
        return t;
    };
    const auto reduce = [](ad::Tape& t, ad::Var x, const ad::TensorData& w) {
        ad::Var weighted = t.mul(x, t.input(w));
        const auto& shape = t.node(weighted.id).shape;
        ad::TensorData ones_r(ad::Shape{1, shape[0]}, 1.0);
        ad::TensorData ones_c(ad::Shape{shape[1], 1}, 1.0);
        return t.matmul(t.matmul(t.input(ones_r), weighted), t.input(ones_c));
    };

    {
        ad::Parameter a("a", tensor(3, 4)), b("b", tensor(4, 5));
        const ad::TensorData w = tensor(3, 5);
        show("matmul chain", ad::grad_check(
            [&](ad::Tape& t) {
                return reduce(t, t.matmul(t.param(a), t.param(b)), w);
            },
            {&a, &b}, 1e-5, 1e-6));
    }
    {
        ad::Parameter x("x", tensor(4, 6));
        ad::Parameter gain("gain", ad::TensorData({6}, 1.2));
        ad::Parameter offset("offset", ad::TensorData({6}, 0.1));
        const ad::TensorData w = tensor(4, 6);
        show("layer_norm", ad::grad_check(
            [&](ad::Tape& t) {
                return reduce(t, t.layer_norm(t.param(x), t.param(gain), t.param(offset)), w);
            },
            {&x, &gain, &offset}, 1e-5, 1e-5));
    }
    {
        ad::Parameter x("x", tensor(3, 5));
        const ad::TensorData w = tensor(3, 5);
        show("softmax", ad::grad_check(
            [&](ad::Tape& t) { return reduce(t, t.softmax_rows(t.param(x)), w); },
            {&x}, 1e-5, 1e-5));
    }
    {
        ad::Parameter logits("logits", tensor(1, 5));
        show("cross_entropy_label_smoothing", ad::grad_check(
            [&](ad::Tape& t) {
                return t.cross_entropy_label_smoothing(t.param(logits), 1, 0.1);
            },
            {&logits}, 1e-5, 1e-5));
    }
    {
        // SP-MHA block.
        const int d = 6, heads = 2;
        std::vector<ad::Parameter> wq, wk;
        for (int h = 0; h < heads; ++h) {
            wq.emplace_back("q" + std::to_string(h), tensor(d, d / heads, 0.5));
            wk.emplace_back("k" + std::to_string(h), tensor(d, d / heads, 0.5));
        }
        const ad::TensorData tokens = tensor(5, d);
        const ad::TensorData w = tensor(5, d);
        std::vector<ad::Parameter*> params;
        for (auto& p : wq) params.push_back(&p);
        for (auto& p : wk) params.push_back(&p);
        show("sp_mha block", ad::grad_check(
            [&](ad::Tape& t) {
                model::AttentionVars vars;
                for (auto& p : wq) vars.wq.push_back(t.param(p));
                for (auto& p : wk) vars.wk.push_back(t.param(p));
                return reduce(t, model::sp_mha(t, t.input(tokens), vars, heads), w);
            },
            params, 1e-5, 1e-4));
    }
    {
        // matrix_log with a linear readout exercises the Loewner rule.
        Eigen::MatrixXd g(4, 4);
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) g(i, j) = rng.normal();
        }
        Eigen::MatrixXd spd = g * g.transpose() + 2.0 * Eigen::MatrixXd::Identity(4, 4);
        ad::Parameter x("x", ad::TensorData(spd));
        const ad::TensorData w = tensor(4, 4);
        show("matrix_log + linear readout", ad::grad_check(
            [&](ad::Tape& t) { return reduce(t, t.matrix_log(t.param(x)), w); },
            {&x}, 1e-6, 1e-4));
    }
    if (tiny_model) {
        model::ModelConfig cfg;
        cfg.sequence_length = 3;
        cfg.context = 1;
        cfg.feature_tokens = 3;
        cfg.p = 3;
        cfg.heads = 1;
        cfg.ff_dim = 10;
        cfg.layers_intra = 1;
        cfg.layers_inter = 1;
        cfg.dropout = 0.0;
        cfg.classes = 3;
        model::Model m(cfg, 3, 77);
        std::vector<Eigen::MatrixXd> epochs;
        for (int e = 0; e < 3; ++e) {
            Eigen::MatrixXd grid(210, 3);
            for (int r = 0; r < 210; ++r) {
                for (int c = 0; c < 3; ++c) grid(r, c) = 0.5 * rng.normal();
            }
            epochs.push_back(grid);
        }
        show("tiny end-to-end model", ad::grad_check(
            [&](ad::Tape& t) {
                return t.cross_entropy_label_smoothing(m.forward(t, epochs), 1, 0.1);
            },
            m.parameters(), 1e-5, 1e-4));
    }
    if (failures > 0) throw Error("gradient checks failed");
    return kExitOk;
}

int run_report(const std::vector<std::string>& run_paths) {
    std::vector<harness::MetricsReport> reports;
    for (const auto& raw : run_paths) {
        fs::path p(raw);
        if (fs::is_directory(p)) {
            if (fs::exists(p / "test_metrics.txt")) p /= "test_metrics.txt";
            else if (fs::exists(p / "validation_metrics.txt")) p /= "validation_metrics.txt";
            else throw IoError("no metrics document in " + p.string());
        }
        reports.push_back(harness::load_metrics(p));
    }
    if (reports.empty()) throw ConfigError("report: no runs given");
    const auto agg = harness::aggregate(reports);

    const auto cell = [](double mean, double std) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.2f +/- %.2f", mean, std);
        return std::string(buf);
    };
    const int n = static_cast<int>(agg.f1_mean.size());
    if (n == 5) {
        // Paper-style columns: macro F1 then the N3/N2/N1 class scores.
        std::printf("%-6s %-16s %-16s %-16s %-16s\n", "runs", "MF1", "N3_F1", "N2_F1",
                    "N1_F1");
        std::printf("%-6d %-16s %-16s %-16s %-16s\n", agg.folds,
                    cell(agg.mf1_mean, agg.mf1_std).c_str(),
                    cell(agg.f1_mean[3], agg.f1_std[3]).c_str(),
                    cell(agg.f1_mean[2], agg.f1_std[2]).c_str(),
                    cell(agg.f1_mean[1], agg.f1_std[1]).c_str());
    } else {
        std::printf("%-6s %-16s", "runs", "MF1");
        for (int c = 0; c < n; ++c) std::printf(" F1_%d            ", c);
        std::printf("\n%-6d %-16s", agg.folds, cell(agg.mf1_mean, agg.mf1_std).c_str());
        for (int c = 0; c < n; ++c) {
            std::printf(" %-16s",
                        cell(agg.f1_mean[static_cast<std::size_t>(c)],
                             agg.f1_std[static_cast<std::size_t>(c)]).c_str());
        }
        std::printf("\n");
    }
    return kExitOk;
}

int run_ablations(const fs::path& config_path, const fs::path& out_dir) {
    const RunConfig base = parse_run_config(config_path);
    fs::create_directories(out_dir);
    for (const auto& [name, cfg] : ablation_suite(base)) {
        RunConfig variant = cfg;
        variant.out_dir = base.out_dir / name;
        std::ofstream out(out_dir / (name + ".cfg"));
        out << serialize(variant);
        std::printf("wrote %s\n", (out_dir / (name + ".cfg")).string().c_str());
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Covariance-sequence classification pipeline (SPD geometry, "
                 "structure-preserving attention)"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic recording corpus");
    int classes = 3, recordings = 6, epochs = 120, fs_rate = 128, signals = 4;
    std::uint64_t seed = 7;
    std::string synth_out = "data";
    synth->add_option("--classes", classes, "number of classes (>= 2)");
    synth->add_option("--recordings", recordings, "number of recordings");
    synth->add_option("--epochs", epochs, "epochs per recording");
    synth->add_option("--seed", seed, "generator seed");
    synth->add_option("--fs", fs_rate, "sampling rate in Hz (> 90)");
    synth->add_option("--signals", signals, "signals per recording (>= 2)");
    synth->add_option("--out", synth_out, "output directory");

    // preprocess
    auto* preprocess = app.add_subcommand("preprocess", "Build token caches per recording");
    std::string pre_config;
    int jobs = 1;
    bool heatmaps = false;
    preprocess->add_option("--config", pre_config, "run config file")->required();
    preprocess->add_option("--jobs", jobs, "worker pool size (default 1, deterministic)");
    preprocess->add_flag("--heatmaps", heatmaps,
                         "also export per-channel enriched-mean CSV matrices");

    // train
    auto* train = app.add_subcommand("train", "Train one fold from cached tokens");
    std::string train_config;
    train->add_option("--config", train_config, "run config file")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the fold's test set");
    std::string eval_config, eval_ckpt, eval_out = "test_metrics.txt";
    int clip = -1;
    eval->add_option("--config", eval_config, "run config file")->required();
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint path (default out_dir/model.ckpt)");
    eval->add_option("--clip", clip, "test-set clipping (default from config)");
    eval->add_option("--out", eval_out, "metrics file name inside out_dir");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    bool tiny = false;
    gradcheck->add_flag("--tiny", tiny, "include the tiny end-to-end model check");

    // report
    auto* report = app.add_subcommand("report", "Aggregate run metrics (mean +/- std)");
    std::vector<std::string> run_paths;
    bool aggregate_flag = false;
    report->add_flag("--aggregate", aggregate_flag, "aggregate the given runs");
    report->add_option("runs", run_paths, "run directories or metrics files")->required();

    // ablations
    auto* ablations = app.add_subcommand("ablations", "Materialize the ablation-suite configs");
    std::string abl_config, abl_out = "ablations";
    ablations->add_option("--config", abl_config, "base run config")->required();
    ablations->add_option("--out", abl_out, "directory for the variant configs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (synth->parsed()) {
            return run_synth(classes, recordings, epochs, seed, fs_rate, signals, synth_out);
        }
        if (preprocess->parsed()) return run_preprocess(pre_config, jobs, heatmaps);
        if (train->parsed()) return run_train(train_config);
        if (eval->parsed()) return run_eval(eval_config, eval_ckpt, clip, eval_out);
        if (gradcheck->parsed()) return run_gradcheck(tiny);
        if (report->parsed()) return run_report(run_paths);
        if (ablations->parsed()) return run_ablations(abl_config, abl_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitConfig;
}
