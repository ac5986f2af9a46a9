#include <benchmark/benchmark.h>

#include "spdseq/model.hpp"
#include "testing_util.hpp"

using namespace spdseq;

namespace {

model::ModelConfig tiny_config() {
    model::ModelConfig cfg;
    cfg.sequence_length = 5;
    cfg.context = 2;
    cfg.feature_tokens = 3;
    cfg.p = 6;
    cfg.heads = 3;
    cfg.ff_dim = 45;
    cfg.layers_intra = 1;
    cfg.layers_inter = 1;
    cfg.dropout = 0.1;
    cfg.classes = 3;
    return cfg;
}

std::vector<Eigen::MatrixXd> epochs_for(const model::ModelConfig& cfg, int token_len) {
    Rng rng(7);
    std::vector<Eigen::MatrixXd> out;
    for (int e = 0; e < cfg.sequence_length; ++e) {
        out.push_back(0.4 * testing::random_gaussian(rng, model::kIntraSequenceLength,
                                                     token_len));
    }
    return out;
}

} // namespace

static void BM_ForwardEval(benchmark::State& state) {
    auto cfg = tiny_config();
    model::Model m(cfg, 15, 1);
    const auto epochs = epochs_for(cfg, 15);
    for (auto _ : state) {
        benchmark::DoNotOptimize(m.predict(epochs));
    }
}
BENCHMARK(BM_ForwardEval);

static void BM_ForwardBackward(benchmark::State& state) {
    auto cfg = tiny_config();
    model::Model m(cfg, 15, 1);
    const auto epochs = epochs_for(cfg, 15);
    auto params = m.parameters();
    for (auto _ : state) {
        for (auto* p : params) p->zero_grad();
        ad::Tape tape(11);
        ad::Var loss = tape.cross_entropy_label_smoothing(m.forward(tape, epochs), 1, 0.1);
        tape.backward(loss);
        benchmark::DoNotOptimize(params.front()->grad.data.data());
    }
}
BENCHMARK(BM_ForwardBackward);

static void BM_SpMha210(benchmark::State& state) {
    Rng rng(9);
    const int d = 21, heads = 3;
    std::vector<ad::Parameter> wq, wk;
    for (int h = 0; h < heads; ++h) {
        ad::TensorData q(ad::Shape{d, d / heads}), k(ad::Shape{d, d / heads});
        for (auto& v : q.data) v = 0.3 * rng.normal();
        for (auto& v : k.data) v = 0.3 * rng.normal();
        wq.emplace_back("q", std::move(q));
        wk.emplace_back("k", std::move(k));
    }
    const ad::TensorData tokens(
        Eigen::MatrixXd(testing::random_gaussian(rng, model::kIntraSequenceLength, d)));
    for (auto _ : state) {
        ad::Tape tape;
        tape.train_mode = false;
        model::AttentionVars vars;
        for (auto& p : wq) vars.wq.push_back(tape.param(p));
        for (auto& p : wk) vars.wk.push_back(tape.param(p));
        benchmark::DoNotOptimize(
            model::sp_mha(tape, tape.input(tokens), vars, heads));
    }
}
BENCHMARK(BM_SpMha210);
