#include "spdseq/harness.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "spdseq/checkpoint.hpp"
#include "spdseq/rng.hpp"

namespace spdseq::harness {

void FoldSpec::validate() const {
    if (test.empty()) throw ConfigError("FoldSpec: test set must be non-empty");
    std::set<std::string> seen;
    for (const auto* list : {&train, &validation, &test}) {
        for (const auto& id : *list) {
            if (!seen.insert(id).second) {
                throw ConfigError("FoldSpec: recording '" + id + "' appears in two splits");
            }
        }
    }
}

void TrainConfig::validate(int context) const {
    if (learning_rate < 0.0) throw ConfigError("TrainConfig: negative learning rate");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be positive");
    if (max_passes < 1) throw ConfigError("TrainConfig: max_passes must be positive");
    if (patience < 1) throw ConfigError("TrainConfig: patience must be positive");
    if (clip_test < context) {
        throw ConfigError("TrainConfig: clip_test must be at least the context radius");
    }
}

std::vector<Eigen::MatrixXd> SequenceItem::epochs() const {
    std::vector<Eigen::MatrixXd> out;
    const int l = 2 * ell + 1;
    out.reserve(static_cast<std::size_t>(l));
    for (int e = center - ell; e <= center + ell; ++e) out.push_back(cache->epoch_tokens(e));
    return out;
}

std::vector<SequenceItem> build_sequences(const TokenCache& cache,
                                          const std::vector<int>& labels, int ell,
                                          std::optional<int> clip) {
    const int epochs = static_cast<int>(cache.epochs);
    if (static_cast<int>(labels.size()) != epochs) {
        throw DimensionMismatch("build_sequences: label count differs from cached epochs");
    }
    const int l = 2 * ell + 1;
    if (epochs < l) {
        std::ostringstream os;
        os << "build_sequences: recording of " << epochs << " epochs shorter than L = " << l;
        throw RecordingTooShort(os.str());
    }
    int first = ell;
    int last = epochs - 1 - ell;
    if (clip) {
        if (*clip < ell) throw ConfigError("build_sequences: clip below context radius");
        first = *clip;
        last = epochs - 1 - *clip;
    }
    if (first > last) {
        throw RecordingTooShort("build_sequences: no targets remain after clipping");
    }
    std::vector<SequenceItem> out;
    out.reserve(static_cast<std::size_t>(last - first + 1));
    for (int c = first; c <= last; ++c) {
        out.push_back(SequenceItem{&cache, c, labels[static_cast<std::size_t>(c)], ell});
    }
    return out;
}

std::vector<SequenceItem> oversample(const std::vector<SequenceItem>& items,
                                     std::uint64_t seed) {
    if (items.empty()) throw EmptyInput("oversample: no items");
    int max_label = 0;
    for (const auto& it : items) max_label = std::max(max_label, it.label);
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label) + 1);
    for (std::size_t i = 0; i < items.size(); ++i) {
        by_class[static_cast<std::size_t>(items[i].label)].push_back(i);
    }
    std::size_t target = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (by_class[c].empty()) {
            throw MissingClass("oversample: class " + std::to_string(c) + " has no examples");
        }
        target = std::max(target, by_class[c].size());
    }

    Rng rng(Rng::derive(seed, 0x0BA1A7CE));
    std::vector<SequenceItem> out;
    out.reserve(target * by_class.size());
    for (auto& cls : by_class) {
        for (std::size_t idx : cls) out.push_back(items[idx]);
        // Duplicate from a reshuffled cycle until the class hits the target.
        std::vector<std::size_t> pool = cls;
        rng.shuffle(pool);
        std::size_t cursor = 0;
        for (std::size_t need = cls.size(); need < target; ++need) {
            out.push_back(items[pool[cursor]]);
            cursor = (cursor + 1) % pool.size();
        }
    }
    rng.shuffle(out);
    return out;
}

namespace {

const RecordingData& find_recording(const std::vector<RecordingData>& corpus,
                                    const std::string& id) {
    for (const auto& rec : corpus) {
        if (rec.id == id) return rec;
    }
    throw ConfigError("harness: recording '" + id + "' not found in corpus");
}

std::vector<SequenceItem> gather_items(const std::vector<RecordingData>& corpus,
                                       const std::vector<std::string>& ids, int ell,
                                       std::optional<int> clip) {
    std::vector<SequenceItem> out;
    for (const auto& id : ids) {
        const RecordingData& rec = find_recording(corpus, id);
        auto items = build_sequences(rec.cache, rec.labels, ell, clip);
        out.insert(out.end(), items.begin(), items.end());
    }
    return out;
}

int argmax(const Eigen::VectorXd& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i) {
        if (v(i) > v(best)) best = i;
    }
    return best;
}

} // namespace

MetricsReport evaluate_items(model::Model& m, const std::vector<SequenceItem>& items) {
    std::vector<int> truth, predicted;
    truth.reserve(items.size());
    predicted.reserve(items.size());
    for (const auto& item : items) {
        truth.push_back(item.label);
        predicted.push_back(argmax(m.predict(item.epochs())));
    }
    return evaluate_predictions(truth, predicted, m.config().classes);
}

TrainResult train(const std::vector<RecordingData>& corpus, const FoldSpec& fold,
                  const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::filesystem::path& checkpoint_path) {
    fold.validate();
    mcfg.validate();
    tcfg.validate(mcfg.context);
    if (corpus.empty()) throw EmptyInput("train: empty corpus");

    const int token_len = corpus.front().cache.token_length();
    for (const auto& rec : corpus) {
        if (rec.cache.token_length() != token_len) {
            throw DimensionMismatch("train: caches disagree on token length");
        }
    }

    auto train_items = gather_items(corpus, fold.train, mcfg.context, std::nullopt);
    auto val_items = gather_items(corpus, fold.validation, mcfg.context, std::nullopt);
    if (train_items.empty()) throw EmptyInput("train: no training targets");
    if (tcfg.oversample) train_items = oversample(train_items, tcfg.seed);

    model::Model m(mcfg, token_len, tcfg.seed);
    auto params = m.parameters();
    if (tcfg.finetune_from) {
        ad::load_checkpoint(*tcfg.finetune_from, params);
    }
    ad::AdamOptimizer optimizer(params, tcfg.learning_rate);

    TrainResult result;
    double best_mf1 = -1.0;
    std::vector<ad::TensorData> best_values;
    int stale_rounds = 0;

    const auto snapshot = [&params]() {
        std::vector<ad::TensorData> values;
        values.reserve(params.size());
        for (const ad::Parameter* p : params) values.push_back(p->value);
        return values;
    };

    for (int pass = 1; pass <= tcfg.max_passes; ++pass) {
        Rng order_rng(Rng::derive(tcfg.seed, 0x5A55 + static_cast<std::uint64_t>(pass)));
        std::vector<std::size_t> order(train_items.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        order_rng.shuffle(order);

        std::size_t cursor = 0;
        std::uint64_t step = 0;
        while (cursor < order.size()) {
            const std::size_t batch =
                std::min<std::size_t>(static_cast<std::size_t>(tcfg.batch_size),
                                      order.size() - cursor);
            optimizer.zero_grad();
            for (std::size_t b = 0; b < batch; ++b) {
                const SequenceItem& item = train_items[order[cursor + b]];
                // Per-item tapes keep memory flat; scaling each loss by 1/batch
                // makes the accumulated gradient the batch mean.
                const std::uint64_t tape_seed = Rng::derive(
                    tcfg.seed, (static_cast<std::uint64_t>(pass) << 32) ^ (step << 8) ^ b);
                ad::Tape tape(tape_seed);
                tape.train_mode = true;
                ad::Var logits = m.forward(tape, item.epochs());
                ad::Var loss = tape.cross_entropy_label_smoothing(logits, item.label,
                                                                  mcfg.label_smoothing);
                loss = tape.scalar_mul(loss, 1.0 / static_cast<double>(batch));
                tape.backward(loss);
            }
            optimizer.step();
            cursor += batch;
            ++step;
        }

        const MetricsReport val_report =
            val_items.empty() ? MetricsReport{} : evaluate_items(m, val_items);
        result.validation_history.push_back(val_report.mf1);
        result.passes_run = pass;

        if (val_report.mf1 > best_mf1) {
            best_mf1 = val_report.mf1;
            result.validation = val_report;
            result.best_pass = pass;
            best_values = snapshot();
            stale_rounds = 0;
        } else {
            ++stale_rounds;
            if (stale_rounds >= tcfg.patience) break;
        }
    }

    if (!best_values.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
    }
    std::vector<const ad::Parameter*> snapshot_params(params.begin(), params.end());
    ad::save_checkpoint(checkpoint_path, snapshot_params);
    result.checkpoint = checkpoint_path;
    return result;
}

MetricsReport evaluate(const std::filesystem::path& checkpoint,
                       const std::vector<RecordingData>& recordings,
                       const model::ModelConfig& mcfg, int clip) {
    if (recordings.empty()) throw EmptyInput("evaluate: no recordings");
    const int token_len = recordings.front().cache.token_length();
    model::Model m(mcfg, token_len, 0);
    auto params = m.parameters();
    ad::load_checkpoint(checkpoint, params);

    std::vector<SequenceItem> items;
    for (const auto& rec : recordings) {
        auto more = build_sequences(rec.cache, rec.labels, mcfg.context, clip);
        items.insert(items.end(), more.begin(), more.end());
    }
    return evaluate_items(m, items);
}

CrossValidationResult cross_validate(const std::vector<RecordingData>& corpus,
                                     const std::vector<FoldSpec>& folds,
                                     const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                                     const std::filesystem::path& workdir) {
    if (folds.empty()) throw EmptyInput("cross_validate: no folds");
    std::filesystem::create_directories(workdir);
    CrossValidationResult result;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const auto ckpt = workdir / ("fold" + std::to_string(f) + ".ckpt");
        train(corpus, folds[f], mcfg, tcfg, ckpt);
        std::vector<RecordingData> test_recs;
        for (const auto& id : folds[f].test) test_recs.push_back(find_recording(corpus, id));
        result.fold_reports.push_back(evaluate(ckpt, test_recs, mcfg, tcfg.clip_test));
    }
    result.aggregate = harness::aggregate(result.fold_reports);
    return result;
}

} // namespace spdseq::harness
