#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <filesystem>

#include "spdseq/checkpoint.hpp"
#include "spdseq/model.hpp"
#include "testing_util.hpp"

using namespace spdseq;
using ad::Parameter;
using ad::Tape;
using ad::TensorData;
using ad::Var;
using model::AttentionVars;
using model::ModelConfig;

namespace {

TensorData tensor_from(Rng& rng, int rows, int cols, double scale = 1.0) {
    TensorData t(ad::Shape{rows, cols});
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.sequence_length = 5;
    cfg.context = 2;
    cfg.feature_tokens = 3;
    cfg.p = 6;        // d(p) = 21
    cfg.heads = 3;
    cfg.ff_dim = 45;  // d(9)
    cfg.layers_intra = 1;
    cfg.layers_inter = 1;
    cfg.dropout = 0.0;
    cfg.label_smoothing = 0.1;
    cfg.classes = 3;
    return cfg;
}

std::vector<Eigen::MatrixXd> random_epochs(Rng& rng, int count, int token_len) {
    std::vector<Eigen::MatrixXd> out;
    for (int e = 0; e < count; ++e) {
        out.push_back(0.5 * testing::random_gaussian(rng, model::kIntraSequenceLength,
                                                     token_len));
    }
    return out;
}

// Holds the parameters behind an AttentionVars registration.
struct AttentionFixture {
    std::vector<Parameter> wq, wk, wv;
    std::unique_ptr<Parameter> wo;
    std::unique_ptr<Parameter> head_logits;

    static AttentionFixture make(Rng& rng, int d, int heads, bool classic,
                                 bool learned_heads = false, double scale = 0.5) {
        AttentionFixture f;
        const int dh = d / heads;
        for (int h = 0; h < heads; ++h) {
            f.wq.emplace_back("q" + std::to_string(h), tensor_from(rng, d, dh, scale));
            f.wk.emplace_back("k" + std::to_string(h), tensor_from(rng, d, dh, scale));
        }
        if (classic) {
            for (int h = 0; h < heads; ++h) {
                f.wv.emplace_back("v" + std::to_string(h), tensor_from(rng, d, dh, scale));
            }
            f.wo = std::make_unique<Parameter>("o", tensor_from(rng, d, d, scale));
        } else if (learned_heads) {
            TensorData logits(ad::Shape{heads}, 0.0);
            for (auto& v : logits.data) v = rng.normal();
            f.head_logits = std::make_unique<Parameter>("hw", logits);
        }
        return f;
    }

    AttentionVars registered(Tape& tape) {
        AttentionVars vars;
        for (auto& p : wq) vars.wq.push_back(tape.param(p));
        for (auto& p : wk) vars.wk.push_back(tape.param(p));
        for (auto& p : wv) vars.wv.push_back(tape.param(p));
        if (wo) vars.wo = tape.param(*wo);
        if (head_logits) vars.head_logits = tape.param(*head_logits);
        return vars;
    }

    std::vector<Parameter*> params() {
        std::vector<Parameter*> out;
        for (auto& p : wq) out.push_back(&p);
        for (auto& p : wk) out.push_back(&p);
        for (auto& p : wv) out.push_back(&p);
        if (wo) out.push_back(wo.get());
        if (head_logits) out.push_back(head_logits.get());
        return out;
    }
};

Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out = logits;
    for (int r = 0; r < out.rows(); ++r) {
        const double mx = out.row(r).maxCoeff();
        out.row(r) = (out.row(r).array() - mx).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

} // namespace

TEST_CASE("ModelConfig validation catches every invariant") {
    CHECK_NOTHROW(tiny_config().validate());
    auto bad = tiny_config();
    bad.sequence_length = 6;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = tiny_config();
    bad.heads = 4;  // 21 % 4 != 0
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = tiny_config();
    bad.feature_tokens = 4;  // 210 % 4 != 0
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = tiny_config();
    bad.ff_dim = 44;  // not triangular
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = tiny_config();
    bad.context = 3;  // L != 2*ell + 1
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("positional encoding adds table rows; zero table is the identity") {
    Rng rng(1);
    Tape tape;
    const TensorData tokens = tensor_from(rng, 4, 6);
    Var x = tape.input(tokens);
    Var table = tape.input(TensorData(ad::Shape{8, 6}, 0.0));
    Var out = model::positional_encoding(tape, x, table);
    CHECK(tape.value(out).data == tokens.data);

    Var small = tape.input(TensorData(ad::Shape{3, 6}, 0.0));
    CHECK_THROWS_AS(model::positional_encoding(tape, x, small), SequenceTooLong);
}

TEST_CASE("positional encoding learns per-position offsets") {
    Rng rng(2);
    Parameter table("pos", TensorData(ad::Shape{4, 3}, 0.0));
    ad::AdamOptimizer opt({&table}, 0.1);

    // A loss that only sees position 0 leaves the other rows untouched.
    opt.zero_grad();
    Tape tape;
    Var x = tape.input(tensor_from(rng, 4, 3));
    Var out = model::positional_encoding(tape, x, tape.param(table));
    Var first = tape.slice_rows(out, 0, 1);
    TensorData ones(ad::Shape{3, 1}, 1.0);
    tape.backward(tape.matmul(tape.mul(first, first), tape.input(ones)));
    opt.step();

    const auto& v = table.value;
    CHECK((std::abs(v.data[0]) + std::abs(v.data[1]) + std::abs(v.data[2])) > 0.0);
    for (std::size_t i = 3; i < v.size(); ++i) CHECK(v.data[i] == 0.0);
}

TEST_CASE("positional encoding gradient flows into the table") {
    Rng rng(3);
    Parameter table("pos", tensor_from(rng, 5, 4, 0.1));
    const TensorData x = tensor_from(rng, 5, 4);
    const TensorData w = tensor_from(rng, 5, 4);
    const auto fn = [&](Tape& t) {
        Var out = model::positional_encoding(t, t.input(x), t.param(table));
        Var weighted = t.mul(out, t.input(w));
        TensorData ones_r(ad::Shape{1, 5}, 1.0);
        TensorData ones_c(ad::Shape{4, 1}, 1.0);
        return t.matmul(t.matmul(t.input(ones_r), weighted), t.input(ones_c));
    };
    CHECK(ad::grad_check(fn, {&table}, 1e-5, 1e-6).passed);
}

TEST_CASE("sp_mha with one zero-weight head is uniform attention") {
    Rng rng(4);
    const int d = 6;
    AttentionFixture fx = AttentionFixture::make(rng, d, 1, false, false, 0.0);
    Tape tape;
    const TensorData tokens = tensor_from(rng, 5, d);
    Var x = tape.input(tokens);
    std::vector<Var> maps;
    Var out = model::sp_mha(tape, x, fx.registered(tape), 1, &maps);

    const Eigen::MatrixXd mean_row = tokens.matrix().colwise().mean();
    const Eigen::MatrixXd got = tape.value(out).matrix();
    for (int r = 0; r < 5; ++r) {
        CHECK((got.row(r) - mean_row).norm() < 1e-12);
    }
    REQUIRE(maps.size() == 1);
    const Eigen::MatrixXd a = tape.value(maps[0]).matrix();
    CHECK((a.array() - 0.2).abs().maxCoeff() < 1e-12);
}

TEST_CASE("sp_mha equals an independent recomputation from raw weights") {
    Rng rng(5);
    const int d = 12, heads = 3, seq = 7;
    AttentionFixture fx = AttentionFixture::make(rng, d, heads, false);
    const TensorData tokens = tensor_from(rng, seq, d);

    Tape tape;
    Var out = model::sp_mha(tape, tape.input(tokens), fx.registered(tape), heads);
    const Eigen::MatrixXd got = tape.value(out).matrix();

    // Re-derive everything with plain Eigen from the raw parameters.
    const Eigen::MatrixXd x = tokens.matrix();
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(seq, d);
    for (int h = 0; h < heads; ++h) {
        const Eigen::MatrixXd q = x * fx.wq[static_cast<std::size_t>(h)].value.matrix();
        const Eigen::MatrixXd k = x * fx.wk[static_cast<std::size_t>(h)].value.matrix();
        const Eigen::MatrixXd a =
            row_softmax(q * k.transpose() / std::sqrt(static_cast<double>(d / heads)));
        expected += a * x;
    }
    expected /= heads;
    CHECK((got - expected).norm() <= 1e-6 * std::max(1.0, expected.norm()));
}

TEST_CASE("sp_mha maps equal tokens to that token (convexity)") {
    Rng rng(6);
    const int d = 6;
    AttentionFixture fx = AttentionFixture::make(rng, d, 2, false);
    Eigen::MatrixXd same(4, d);
    const Eigen::RowVectorXd token = testing::random_gaussian(rng, 1, d);
    for (int r = 0; r < 4; ++r) same.row(r) = token;
    Tape tape;
    Var out = model::sp_mha(tape, tape.input(TensorData(same)), fx.registered(tape), 2);
    const Eigen::MatrixXd got = tape.value(out).matrix();
    for (int r = 0; r < 4; ++r) CHECK((got.row(r) - token).norm() < 1e-10);
}

TEST_CASE("attention maps are row-stochastic in both MHA kinds") {
    Rng rng(7);
    const int d = 6;
    for (const bool classic : {false, true}) {
        AttentionFixture fx = AttentionFixture::make(rng, d, 2, classic);
        Tape tape;
        std::vector<Var> maps;
        Var x = tape.input(tensor_from(rng, 9, d));
        if (classic) {
            model::classic_mha(tape, x, fx.registered(tape), 2, &maps);
        } else {
            model::sp_mha(tape, x, fx.registered(tape), 2, &maps);
        }
        REQUIRE(maps.size() == 2);
        for (const Var& m : maps) {
            const Eigen::MatrixXd a = tape.value(m).matrix();
            CHECK((a.array() >= 0.0).all());
            for (int r = 0; r < a.rows(); ++r) {
                CHECK(std::abs(a.row(r).sum() - 1.0) <= 1e-9);
            }
        }
    }
}

TEST_CASE("classic_mha with identity value/output projections equals sp_mha at h=1") {
    Rng rng(8);
    const int d = 5;
    AttentionFixture sp = AttentionFixture::make(rng, d, 1, false);
    AttentionFixture classic;
    classic.wq.emplace_back("q0", sp.wq[0].value);
    classic.wk.emplace_back("k0", sp.wk[0].value);
    classic.wv.emplace_back("v0", TensorData(Eigen::MatrixXd(Eigen::MatrixXd::Identity(d, d))));
    classic.wo = std::make_unique<Parameter>("o", TensorData(Eigen::MatrixXd(Eigen::MatrixXd::Identity(d, d))));

    const TensorData tokens = tensor_from(rng, 6, d);
    Tape t1, t2;
    Var o1 = model::sp_mha(t1, t1.input(tokens), sp.registered(t1), 1);
    Var o2 = model::classic_mha(t2, t2.input(tokens), classic.registered(t2), 1);
    const Eigen::MatrixXd a = t1.value(o1).matrix();
    const Eigen::MatrixXd b = t2.value(o2).matrix();
    CHECK((a - b).norm() < 1e-12);
}

TEST_CASE("sp_mha and classic_mha pass gradient checks") {
    Rng rng(9);
    const int d = 6, seq = 4;
    const TensorData tokens = tensor_from(rng, seq, d);
    const TensorData w = tensor_from(rng, seq, d);

    const auto reduce = [&w](Tape& t, Var out) {
        Var weighted = t.mul(out, t.input(w));
        TensorData ones_r(ad::Shape{1, 4}, 1.0);
        TensorData ones_c(ad::Shape{6, 1}, 1.0);
        return t.matmul(t.matmul(t.input(ones_r), weighted), t.input(ones_c));
    };

    {
        AttentionFixture fx = AttentionFixture::make(rng, d, 2, false);
        const auto fn = [&](Tape& t) {
            return reduce(t, model::sp_mha(t, t.input(tokens), fx.registered(t), 2));
        };
        CHECK(ad::grad_check(fn, fx.params(), 1e-5, 1e-4).passed);
    }
    {
        AttentionFixture fx = AttentionFixture::make(rng, d, 2, true);
        const auto fn = [&](Tape& t) {
            return reduce(t, model::classic_mha(t, t.input(tokens), fx.registered(t), 2));
        };
        CHECK(ad::grad_check(fn, fx.params(), 1e-5, 1e-5).passed);
    }
    {
        AttentionFixture fx = AttentionFixture::make(rng, d, 3, false, true);
        const auto fn = [&](Tape& t) {
            return reduce(t, model::sp_mha(t, t.input(tokens), fx.registered(t), 3));
        };
        CHECK(ad::grad_check(fn, fx.params(), 1e-5, 1e-4).passed);
    }
}

TEST_CASE("learned head weights stay a convex combination") {
    Rng rng(10);
    const int d = 6;
    AttentionFixture fx = AttentionFixture::make(rng, d, 3, false, true);
    Eigen::MatrixXd same(4, d);
    const Eigen::RowVectorXd token = testing::random_gaussian(rng, 1, d);
    for (int r = 0; r < 4; ++r) same.row(r) = token;
    Tape tape;
    Var out = model::sp_mha(tape, tape.input(TensorData(same)), fx.registered(tape), 3);
    const Eigen::MatrixXd got = tape.value(out).matrix();
    for (int r = 0; r < 4; ++r) CHECK((got.row(r) - token).norm() < 1e-10);
}

namespace {

Eigen::MatrixXd layer_norm_ref(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out = x;
    for (int r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + 1e-5);
    }
    return out;
}

} // namespace

TEST_CASE("encoder layer with zero weights reduces to the LN reference") {
    Rng rng(11);
    ModelConfig cfg = tiny_config();
    cfg.heads = 1;
    const int d = cfg.token_dim();

    for (const bool classic : {true, false}) {
        cfg.mha = classic ? model::MhaKind::CLASSIC : model::MhaKind::SP;
        AttentionFixture fx = AttentionFixture::make(rng, d, 1, classic, false, 0.0);
        Parameter ff_w1("ff_w1", TensorData(ad::Shape{d, cfg.ff_dim}, 0.0));
        Parameter ff_b1("ff_b1", TensorData({cfg.ff_dim}, 0.0));
        Parameter ff_w2("ff_w2", TensorData(ad::Shape{cfg.ff_dim, d}, 0.0));
        Parameter ff_b2("ff_b2", TensorData({d}, 0.0));
        Parameter g1("g1", TensorData({d}, 1.0)), b1("b1", TensorData({d}, 0.0));
        Parameter g2("g2", TensorData({d}, 1.0)), b2("b2", TensorData({d}, 0.0));

        Tape tape;
        tape.train_mode = false;
        model::EncoderLayerVars vars;
        vars.attn = fx.registered(tape);
        vars.ff_w1 = tape.param(ff_w1);
        vars.ff_b1 = tape.param(ff_b1);
        vars.ff_w2 = tape.param(ff_w2);
        vars.ff_b2 = tape.param(ff_b2);
        vars.ln1_gain = tape.param(g1);
        vars.ln1_offset = tape.param(b1);
        vars.ln2_gain = tape.param(g2);
        vars.ln2_offset = tape.param(b2);

        const TensorData tokens = tensor_from(rng, 8, d);
        Var out = model::encoder_layer(tape, tape.input(tokens), vars, cfg);
        CHECK(tape.node(out.id).shape[0] == 8);  // length preserved

        // Zero V/O gives attended = 0; zero Q/K in SP mode gives uniform
        // attention, i.e. the token mean added to each row.
        Eigen::MatrixXd x = tokens.matrix();
        Eigen::MatrixXd attended = Eigen::MatrixXd::Zero(8, d);
        if (!classic) {
            const Eigen::RowVectorXd mean = x.colwise().mean();
            for (int r = 0; r < 8; ++r) attended.row(r) = mean;
        }
        const Eigen::MatrixXd expected = layer_norm_ref(layer_norm_ref(x + attended));
        CHECK((tape.value(out).matrix() - expected).norm() < 1e-9);
    }
}

TEST_CASE("model forward: shape contract at the published dimensions") {
    // L = 21, t = 5, d(p) = 351: (21 x 210 x d(m)) -> premap 210 x 351 per
    // epoch -> 5 x 351 per epoch -> 105 x 351 -> 5 x 351 -> 5 logits.
    ModelConfig cfg;
    cfg.sequence_length = 21;
    cfg.context = 10;
    cfg.feature_tokens = 5;
    cfg.p = 26;
    cfg.heads = 3;
    cfg.ff_dim = 903;
    cfg.layers_intra = 1;
    cfg.layers_inter = 1;
    cfg.dropout = 0.1;
    cfg.classes = 5;
    model::Model m(cfg, 15, 1);

    Rng rng(12);
    auto epochs = random_epochs(rng, 21, 15);
    Tape tape;
    tape.train_mode = false;
    model::ForwardTrace trace;
    Var logits = m.forward(tape, epochs, &trace);

    REQUIRE(trace.premapped_nodes.size() == 21);
    for (int id : trace.premapped_nodes) {
        CHECK(tape.node(id).shape == ad::Shape{210, 351});
    }
    CHECK(tape.node(trace.features_node).shape == ad::Shape{5, 351});
    CHECK(tape.node(logits.id).shape == ad::Shape{1, 5});
}

TEST_CASE("model forward is deterministic in eval mode") {
    ModelConfig cfg = tiny_config();
    model::Model m(cfg, 15, 7);
    Rng rng(13);
    const auto epochs = random_epochs(rng, cfg.sequence_length, 15);
    const Eigen::VectorXd a = m.predict(epochs);
    const Eigen::VectorXd b = m.predict(epochs);
    CHECK((a.array() == b.array()).all());
    CHECK(a.size() == 3);
}

TEST_CASE("permuting non-central epochs changes the output") {
    ModelConfig cfg = tiny_config();
    model::Model m(cfg, 15, 21);
    Rng rng(14);
    auto epochs = random_epochs(rng, cfg.sequence_length, 15);
    const Eigen::VectorXd base = m.predict(epochs);
    std::swap(epochs[0], epochs[4]);  // keep the centre (index 2) fixed
    const Eigen::VectorXd swapped = m.predict(epochs);
    CHECK((base - swapped).norm() > 1e-8);
}

TEST_CASE("constant tokens collapse every intra feature token to one value") {
    ModelConfig cfg = tiny_config();
    model::Model m(cfg, 15, 3);
    Rng rng(15);
    const Eigen::RowVectorXd token = testing::random_gaussian(rng, 1, 15);
    std::vector<Eigen::MatrixXd> epochs;
    for (int e = 0; e < cfg.sequence_length; ++e) {
        Eigen::MatrixXd grid(210, 15);
        for (int r = 0; r < 210; ++r) grid.row(r) = token;
        epochs.push_back(grid);
    }
    Tape tape;
    tape.train_mode = false;
    // Zero the positional tables so convexity is exact across positions.
    for (ad::Parameter* p : m.parameters()) {
        if (p->name.rfind("pos.", 0) == 0) {
            std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
        }
    }
    model::ForwardTrace trace;
    m.forward(tape, epochs, &trace);
    // All feature tokens equal: every row of the central features matches.
    const Eigen::MatrixXd feats = tape.value(Var{&tape, trace.features_node}).matrix();
    for (int r = 1; r < feats.rows(); ++r) {
        CHECK((feats.row(r) - feats.row(0)).norm() < 1e-9);
    }
}

TEST_CASE("zero-weight classifier head emits its biases") {
    ModelConfig cfg = tiny_config();
    model::Model m(cfg, 15, 99);
    for (ad::Parameter* p : m.parameters()) {
        std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
        if (p->name.find("ln") != std::string::npos && p->name.find("gain") != std::string::npos) {
            std::fill(p->value.data.begin(), p->value.data.end(), 1.0);
        }
        if (p->name == "head.out_b") {
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                p->value.data[i] = 0.5 * static_cast<double>(i + 1);
            }
        }
    }
    Rng rng(16);
    const Eigen::VectorXd logits = m.predict(random_epochs(rng, cfg.sequence_length, 15));
    CHECK(logits(0) == doctest::Approx(0.5));
    CHECK(logits(1) == doctest::Approx(1.0));
    CHECK(logits(2) == doctest::Approx(1.5));
}

TEST_CASE("structure audit passes in SP mode and flags classic mode") {
    Rng rng(17);
    const auto epochs = random_epochs(rng, 5, 15);

    ModelConfig cfg = tiny_config();
    model::Model sp(cfg, 15, 5);
    Tape t1;
    t1.train_mode = false;
    model::ForwardTrace trace1;
    sp.forward(t1, epochs, &trace1);
    const auto report1 = model::audit_structure(t1, trace1.features_node);
    CHECK(report1.ok);
    CHECK(report1.offending.empty());

    cfg.mha = model::MhaKind::CLASSIC;
    model::Model classic(cfg, 15, 5);
    Tape t2;
    t2.train_mode = false;
    model::ForwardTrace trace2;
    classic.forward(t2, epochs, &trace2);
    const auto report2 = model::audit_structure(t2, trace2.features_node);
    CHECK_FALSE(report2.ok);
}

TEST_CASE("SP-MHA has strictly fewer parameters than classic MHA") {
    ModelConfig cfg = tiny_config();
    model::Model sp(cfg, 15, 1);
    cfg.mha = model::MhaKind::CLASSIC;
    model::Model classic(cfg, 15, 1);
    CHECK(sp.attention_parameter_count() < classic.attention_parameter_count());
    CHECK(sp.parameter_count() < classic.parameter_count());
}

TEST_CASE("end-to-end gradient check on the miniature configuration") {
    ModelConfig cfg;
    cfg.sequence_length = 3;
    cfg.context = 1;
    cfg.feature_tokens = 3;
    cfg.p = 3;        // d(p) = 6
    cfg.heads = 1;
    cfg.ff_dim = 10;  // d(4)
    cfg.layers_intra = 1;
    cfg.layers_inter = 1;
    cfg.dropout = 0.0;
    cfg.label_smoothing = 0.1;
    cfg.classes = 3;
    model::Model m(cfg, 3, 2025);

    Rng rng(18);
    const auto epochs = random_epochs(rng, 3, 3);
    const auto fn = [&](Tape& t) {
        Var logits = m.forward(t, epochs);
        return t.cross_entropy_label_smoothing(logits, 1, cfg.label_smoothing);
    };
    const auto report = ad::grad_check(fn, m.parameters(), 1e-5, 1e-4);
    CHECK(report.passed);
    if (!report.passed) {
        for (const auto& e : report.entries) {
            if (e.max_rel_error > 1e-4) {
                MESSAGE(e.name, " rel err ", e.max_rel_error);
            }
        }
    }
}

TEST_CASE("model checkpoints restore identical predictions") {
    ModelConfig cfg = tiny_config();
    model::Model a(cfg, 15, 31);
    Rng rng(19);
    const auto epochs = random_epochs(rng, cfg.sequence_length, 15);
    const Eigen::VectorXd before = a.predict(epochs);

    const auto dir = std::filesystem::temp_directory_path() / "spdseq_model_ckpt";
    std::filesystem::create_directories(dir);
    const auto path = dir / "m.ckpt";
    {
        auto params = a.parameters();
        std::vector<const Parameter*> cps(params.begin(), params.end());
        ad::save_checkpoint(path, cps);
    }
    model::Model b(cfg, 15, 999);  // different init seed
    auto params = b.parameters();
    ad::load_checkpoint(path, params);
    const Eigen::VectorXd after = b.predict(epochs);
    CHECK((before.array() == after.array()).all());
}

TEST_CASE("forward rejects malformed inputs") {
    ModelConfig cfg = tiny_config();
    model::Model m(cfg, 15, 3);
    Rng rng(20);
    auto epochs = random_epochs(rng, cfg.sequence_length - 1, 15);
    Tape tape;
    CHECK_THROWS_AS(m.forward(tape, epochs), ShapeMismatch);

    auto bad = random_epochs(rng, cfg.sequence_length, 14);
    Tape tape2;
    CHECK_THROWS_AS(m.forward(tape2, bad), ShapeMismatch);
}

TEST_CASE("t = 7 feature-token chunks align with channel blocks") {
    // Tokens are channel-major (30 segments of channel 0 first), so chunked
    // pooling at t = 7 averages exactly one channel per feature token.
    Rng rng(21);
    Eigen::MatrixXd grid(210, 4);
    for (int c = 0; c < 7; ++c) {
        for (int s = 0; s < 30; ++s) {
            grid.row(c * 30 + s) = Eigen::RowVectorXd::Constant(4, static_cast<double>(c)) +
                                   0.01 * testing::random_gaussian(rng, 1, 4);
        }
    }
    Tape tape;
    Var pooled = tape.chunk_mean(tape.input(TensorData(grid)), 7);
    const Eigen::MatrixXd feats = tape.value(pooled).matrix();
    REQUIRE(feats.rows() == 7);
    for (int c = 0; c < 7; ++c) {
        for (int j = 0; j < 4; ++j) {
            CHECK(feats(c, j) == doctest::Approx(static_cast<double>(c)).epsilon(0.02));
        }
    }
}

TEST_CASE("L = 1 sequences select the whole inter-epoch output") {
    ModelConfig cfg = tiny_config();
    cfg.sequence_length = 1;
    cfg.context = 0;
    model::Model m(cfg, 15, 77);
    Rng rng(22);
    const auto epochs = random_epochs(rng, 1, 15);
    Tape tape;
    tape.train_mode = false;
    model::ForwardTrace trace;
    Var logits = m.forward(tape, epochs, &trace);
    // With ell = 0 the central slice covers the full L*t = t sequence.
    CHECK(tape.node(trace.features_node).shape == ad::Shape{3, 21});
    CHECK(tape.node(logits.id).shape == ad::Shape{1, 3});
}

TEST_CASE("structure audit also passes with learned head weights") {
    Rng rng(23);
    const auto epochs = random_epochs(rng, 5, 15);
    ModelConfig cfg = tiny_config();
    cfg.learned_head_weights = true;
    model::Model m(cfg, 15, 8);
    Tape tape;
    tape.train_mode = false;
    model::ForwardTrace trace;
    m.forward(tape, epochs, &trace);
    const auto report = model::audit_structure(tape, trace.features_node);
    CHECK(report.ok);
}
