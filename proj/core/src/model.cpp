#include "spdseq/model.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace spdseq::model {

void ModelConfig::validate() const {
    if (sequence_length != 2 * context + 1) {
        throw ConfigError("ModelConfig: sequence_length must equal 2*context + 1");
    }
    if (sequence_length < 1 || sequence_length % 2 == 0) {
        throw ConfigError("ModelConfig: sequence_length must be odd and positive");
    }
    if (p < 1) throw ConfigError("ModelConfig: p must be positive");
    if (heads < 1 || token_dim() % heads != 0) {
        throw ConfigError("ModelConfig: token dim d(p) must be divisible by heads");
    }
    if (feature_tokens < 1 || kIntraSequenceLength % feature_tokens != 0) {
        throw ConfigError("ModelConfig: feature_tokens must divide 210");
    }
    if (!is_triangular_length(ff_dim)) {
        throw ConfigError("ModelConfig: ff_dim must be a triangular length");
    }
    if (layers_intra < 1 || layers_inter < 1) {
        throw ConfigError("ModelConfig: encoder depths must be at least 1");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("ModelConfig: dropout in [0,1)");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
        throw ConfigError("ModelConfig: label_smoothing in [0,1)");
    }
    if (classes < 2) throw ConfigError("ModelConfig: need at least 2 classes");
}

ad::Var positional_encoding(ad::Tape& tape, ad::Var tokens, ad::Var table) {
    const auto& nt = tape.node(tokens.id);
    const auto& np = tape.node(table.id);
    if (nt.shape.size() != 2 || np.shape.size() != 2 || nt.shape[1] != np.shape[1]) {
        throw ShapeMismatch("positional_encoding: table and tokens disagree on token dim");
    }
    if (nt.shape[0] > np.shape[0]) {
        std::ostringstream os;
        os << "positional_encoding: sequence of " << nt.shape[0]
           << " exceeds table of " << np.shape[0];
        throw SequenceTooLong(os.str());
    }
    ad::Var offsets = (nt.shape[0] == np.shape[0])
                          ? table
                          : tape.slice_rows(table, 0, nt.shape[0]);
    return tape.add(tokens, offsets);
}

namespace {

// Attention maps shared by both MHA kinds: A_i = softmax(Q_i K_i^T / sqrt(d_h)).
std::vector<ad::Var> attention_maps(ad::Tape& tape, ad::Var tokens, const AttentionVars& vars,
                                    int heads) {
    const int d = tape.node(tokens.id).shape[1];
    const int d_head = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));
    std::vector<ad::Var> maps;
    maps.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        ad::Var q = tape.matmul(tokens, vars.wq[static_cast<std::size_t>(h)]);
        ad::Var k = tape.matmul(tokens, vars.wk[static_cast<std::size_t>(h)]);
        ad::Var logits = tape.scalar_mul(tape.matmul(q, tape.transpose(k)), scale);
        maps.push_back(tape.softmax_rows(logits));
    }
    return maps;
}

// Column-wise concatenation built from transposes; ablation path only.
ad::Var concat_cols(ad::Tape& tape, const std::vector<ad::Var>& xs) {
    std::vector<ad::Var> transposed;
    transposed.reserve(xs.size());
    for (ad::Var x : xs) transposed.push_back(tape.transpose(x));
    return tape.transpose(tape.concat_rows(transposed));
}

} // namespace

ad::Var sp_mha(ad::Tape& tape, ad::Var tokens, const AttentionVars& vars, int heads,
               std::vector<ad::Var>* out_maps) {
    const auto& nt = tape.node(tokens.id);
    if (nt.shape.size() != 2) throw ShapeMismatch("sp_mha: tokens must be rank 2");
    if (static_cast<int>(vars.wq.size()) != heads || static_cast<int>(vars.wk.size()) != heads) {
        throw ShapeMismatch("sp_mha: need one Q and K projection per head");
    }
    if (nt.shape[1] % heads != 0) throw ShapeMismatch("sp_mha: token dim not divisible by heads");

    const auto maps = attention_maps(tape, tokens, vars, heads);
    if (out_maps) out_maps->insert(out_maps->end(), maps.begin(), maps.end());

    // Values stay unprojected; each head contributes A_i * tokens and heads
    // combine by mean (or learned nonnegative weights summing to one).
    std::vector<ad::Var> applied;
    applied.reserve(maps.size());
    for (const ad::Var& a : maps) applied.push_back(tape.attend(a, tokens));

    if (vars.head_logits) {
        ad::Var weights = tape.softmax_rows(tape.reshape(*vars.head_logits, {1, heads}));
        ad::Var col = tape.transpose(weights);  // [heads x 1]
        ad::Var combined = tape.scale(applied[0], tape.slice_rows(col, 0, 1));
        for (int h = 1; h < heads; ++h) {
            combined = tape.add(combined,
                                tape.scale(applied[static_cast<std::size_t>(h)],
                                           tape.slice_rows(col, h, h + 1)));
        }
        return combined;
    }

    ad::Var sum = applied[0];
    for (int h = 1; h < heads; ++h) sum = tape.add(sum, applied[static_cast<std::size_t>(h)]);
    return tape.scalar_mul(sum, 1.0 / heads);
}

ad::Var classic_mha(ad::Tape& tape, ad::Var tokens, const AttentionVars& vars, int heads,
                    std::vector<ad::Var>* out_maps) {
    const auto& nt = tape.node(tokens.id);
    if (nt.shape.size() != 2) throw ShapeMismatch("classic_mha: tokens must be rank 2");
    if (static_cast<int>(vars.wv.size()) != heads || !vars.wo) {
        throw ShapeMismatch("classic_mha: need value projections and an output projection");
    }

    const auto maps = attention_maps(tape, tokens, vars, heads);
    if (out_maps) out_maps->insert(out_maps->end(), maps.begin(), maps.end());

    std::vector<ad::Var> head_outputs;
    head_outputs.reserve(maps.size());
    for (int h = 0; h < heads; ++h) {
        ad::Var v = tape.matmul(tokens, vars.wv[static_cast<std::size_t>(h)]);
        head_outputs.push_back(tape.attend(maps[static_cast<std::size_t>(h)], v));
    }
    ad::Var merged = heads == 1 ? head_outputs[0] : concat_cols(tape, head_outputs);
    return tape.matmul(merged, *vars.wo);
}

ad::Var encoder_layer(ad::Tape& tape, ad::Var tokens, const EncoderLayerVars& vars,
                      const ModelConfig& cfg, std::vector<ad::Var>* out_maps) {
    ad::Var attended = cfg.mha == MhaKind::SP
                           ? sp_mha(tape, tokens, vars.attn, cfg.heads, out_maps)
                           : classic_mha(tape, tokens, vars.attn, cfg.heads, out_maps);
    ad::Var x1 = tape.layer_norm(tape.add(tokens, attended), vars.ln1_gain, vars.ln1_offset);

    ad::Var ff = tape.add_row(tape.matmul(x1, vars.ff_w1), vars.ff_b1);
    ff = tape.dropout(tape.relu(ff), cfg.dropout);
    ff = tape.add_row(tape.matmul(ff, vars.ff_w2), vars.ff_b2);

    return tape.layer_norm(tape.add(x1, ff), vars.ln2_gain, vars.ln2_offset);
}

namespace {

ad::TensorData xavier(Rng& rng, int rows, int cols) {
    const double limit = std::sqrt(6.0 / (rows + cols));
    ad::TensorData t(ad::Shape{rows, cols});
    for (auto& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

ad::TensorData small_normal(Rng& rng, int rows, int cols, double sd) {
    ad::TensorData t(ad::Shape{rows, cols});
    for (auto& v : t.data) v = sd * rng.normal();
    return t;
}

} // namespace

Model::LayerParams Model::make_layer(const std::string& prefix, Rng& rng) {
    const int d = cfg_.token_dim();
    const int d_head = d / cfg_.heads;
    LayerParams layer;
    for (int h = 0; h < cfg_.heads; ++h) {
        layer.wq.emplace_back(prefix + ".q" + std::to_string(h), xavier(rng, d, d_head));
        layer.wk.emplace_back(prefix + ".k" + std::to_string(h), xavier(rng, d, d_head));
    }
    if (cfg_.mha == MhaKind::CLASSIC) {
        for (int h = 0; h < cfg_.heads; ++h) {
            layer.wv.emplace_back(prefix + ".v" + std::to_string(h), xavier(rng, d, d_head));
        }
        layer.wo.emplace(prefix + ".o", xavier(rng, d, d));
    } else if (cfg_.learned_head_weights) {
        layer.head_logits.emplace(prefix + ".head_weights",
                                  ad::TensorData({cfg_.heads}, 0.0));
    }
    layer.ff_w1 = ad::Parameter(prefix + ".ff_w1", xavier(rng, d, cfg_.ff_dim));
    layer.ff_b1 = ad::Parameter(prefix + ".ff_b1", ad::TensorData({cfg_.ff_dim}, 0.0));
    layer.ff_w2 = ad::Parameter(prefix + ".ff_w2", xavier(rng, cfg_.ff_dim, d));
    layer.ff_b2 = ad::Parameter(prefix + ".ff_b2", ad::TensorData({d}, 0.0));
    layer.ln1_gain = ad::Parameter(prefix + ".ln1_gain", ad::TensorData({d}, 1.0));
    layer.ln1_offset = ad::Parameter(prefix + ".ln1_offset", ad::TensorData({d}, 0.0));
    layer.ln2_gain = ad::Parameter(prefix + ".ln2_gain", ad::TensorData({d}, 1.0));
    layer.ln2_offset = ad::Parameter(prefix + ".ln2_offset", ad::TensorData({d}, 0.0));
    return layer;
}

Model::Model(ModelConfig cfg, int input_token_length, std::uint64_t seed)
    : cfg_(cfg), input_token_length_(input_token_length) {
    cfg_.validate();
    // The shared input map is triangular on both ends.
    matrix_dim_for_length(input_token_length_);
    const int d = cfg_.token_dim();
    Rng rng(Rng::derive(seed, 0x90de1));

    premap_w_ = ad::Parameter("premap.w", xavier(rng, input_token_length_, d));
    premap_b_ = ad::Parameter("premap.b", ad::TensorData({d}, 0.0));
    pos_intra_ = ad::Parameter("pos.intra", small_normal(rng, kIntraSequenceLength, d, 0.02));
    pos_inter_ = ad::Parameter(
        "pos.inter",
        small_normal(rng, cfg_.sequence_length * cfg_.feature_tokens, d, 0.02));

    for (int l = 0; l < cfg_.layers_intra; ++l) {
        intra_.push_back(make_layer("intra" + std::to_string(l), rng));
    }
    for (int l = 0; l < cfg_.layers_inter; ++l) {
        inter_.push_back(make_layer("inter" + std::to_string(l), rng));
    }

    const int flat = cfg_.feature_tokens * d;
    const int hidden2 = nearest_triangular(d / 2);
    head_w1_ = ad::Parameter("head.w1", xavier(rng, flat, d));
    head_b1_ = ad::Parameter("head.b1", ad::TensorData({d}, 0.0));
    head_w2_ = ad::Parameter("head.w2", xavier(rng, d, hidden2));
    head_b2_ = ad::Parameter("head.b2", ad::TensorData({hidden2}, 0.0));
    out_w_ = ad::Parameter("head.out_w", xavier(rng, hidden2, cfg_.classes));
    out_b_ = ad::Parameter("head.out_b", ad::TensorData({cfg_.classes}, 0.0));
}

void Model::collect(std::vector<ad::Parameter*>& out) {
    out.push_back(&premap_w_);
    out.push_back(&premap_b_);
    out.push_back(&pos_intra_);
    out.push_back(&pos_inter_);
    for (auto* block : {&intra_, &inter_}) {
        for (LayerParams& layer : *block) {
            for (auto& p : layer.wq) out.push_back(&p);
            for (auto& p : layer.wk) out.push_back(&p);
            for (auto& p : layer.wv) out.push_back(&p);
            if (layer.wo) out.push_back(&*layer.wo);
            if (layer.head_logits) out.push_back(&*layer.head_logits);
            out.push_back(&layer.ff_w1);
            out.push_back(&layer.ff_b1);
            out.push_back(&layer.ff_w2);
            out.push_back(&layer.ff_b2);
            out.push_back(&layer.ln1_gain);
            out.push_back(&layer.ln1_offset);
            out.push_back(&layer.ln2_gain);
            out.push_back(&layer.ln2_offset);
        }
    }
    out.push_back(&head_w1_);
    out.push_back(&head_b1_);
    out.push_back(&head_w2_);
    out.push_back(&head_b2_);
    out.push_back(&out_w_);
    out.push_back(&out_b_);
}

std::vector<ad::Parameter*> Model::parameters() {
    std::vector<ad::Parameter*> out;
    collect(out);
    return out;
}

std::vector<const ad::Parameter*> Model::parameters() const {
    std::vector<ad::Parameter*> mut;
    const_cast<Model*>(this)->collect(mut);
    return {mut.begin(), mut.end()};
}

long Model::parameter_count() const {
    long count = 0;
    for (const ad::Parameter* p : parameters()) count += static_cast<long>(p->value.size());
    return count;
}

long Model::attention_parameter_count() const {
    long count = 0;
    for (const auto* block : {&intra_, &inter_}) {
        for (const LayerParams& layer : *block) {
            for (const auto& p : layer.wq) count += static_cast<long>(p.value.size());
            for (const auto& p : layer.wk) count += static_cast<long>(p.value.size());
            for (const auto& p : layer.wv) count += static_cast<long>(p.value.size());
            if (layer.wo) count += static_cast<long>(layer.wo->value.size());
            if (layer.head_logits) count += static_cast<long>(layer.head_logits->value.size());
        }
    }
    return count;
}

EncoderLayerVars Model::register_layer(ad::Tape& tape, LayerParams& layer) {
    EncoderLayerVars vars;
    for (auto& p : layer.wq) vars.attn.wq.push_back(tape.param(p));
    for (auto& p : layer.wk) vars.attn.wk.push_back(tape.param(p));
    for (auto& p : layer.wv) vars.attn.wv.push_back(tape.param(p));
    if (layer.wo) vars.attn.wo = tape.param(*layer.wo);
    if (layer.head_logits) vars.attn.head_logits = tape.param(*layer.head_logits);
    vars.ff_w1 = tape.param(layer.ff_w1);
    vars.ff_b1 = tape.param(layer.ff_b1);
    vars.ff_w2 = tape.param(layer.ff_w2);
    vars.ff_b2 = tape.param(layer.ff_b2);
    vars.ln1_gain = tape.param(layer.ln1_gain);
    vars.ln1_offset = tape.param(layer.ln1_offset);
    vars.ln2_gain = tape.param(layer.ln2_gain);
    vars.ln2_offset = tape.param(layer.ln2_offset);
    return vars;
}

ad::Var Model::forward(ad::Tape& tape, const std::vector<Eigen::MatrixXd>& epochs,
                       ForwardTrace* trace) {
    if (static_cast<int>(epochs.size()) != cfg_.sequence_length) {
        throw ShapeMismatch("forward: wrong number of epochs in sequence");
    }
    for (const auto& e : epochs) {
        if (e.rows() != kIntraSequenceLength || e.cols() != input_token_length_) {
            throw ShapeMismatch("forward: epoch token grid has wrong shape");
        }
    }

    ad::Var premap_w = tape.param(premap_w_);
    ad::Var premap_b = tape.param(premap_b_);
    ad::Var pos_intra = tape.param(pos_intra_);
    ad::Var pos_inter = tape.param(pos_inter_);
    std::vector<EncoderLayerVars> intra_vars, inter_vars;
    for (auto& layer : intra_) intra_vars.push_back(register_layer(tape, layer));
    for (auto& layer : inter_) inter_vars.push_back(register_layer(tape, layer));

    std::vector<ad::Var>* maps = trace ? &trace->attention_maps : nullptr;

    std::vector<ad::Var> epoch_features;
    epoch_features.reserve(epochs.size());
    for (const auto& grid : epochs) {
        ad::Var x = tape.input(ad::TensorData(grid));
        x = tape.add_row(tape.matmul(x, premap_w), premap_b);
        if (trace) trace->premapped_nodes.push_back(x.id);
        x = positional_encoding(tape, x, pos_intra);
        for (auto& vars : intra_vars) x = encoder_layer(tape, x, vars, cfg_, maps);
        epoch_features.push_back(tape.chunk_mean(x, cfg_.feature_tokens));
    }

    ad::Var seq = tape.concat_rows(epoch_features);
    if (cfg_.inter_positional_encoding) seq = positional_encoding(tape, seq, pos_inter);
    for (auto& vars : inter_vars) seq = encoder_layer(tape, seq, vars, cfg_, maps);

    const int t = cfg_.feature_tokens;
    ad::Var central = tape.slice_rows(seq, cfg_.context * t, (cfg_.context + 1) * t);
    if (trace) trace->features_node = central.id;

    ad::Var flat = tape.reshape(central, {1, t * cfg_.token_dim()});
    ad::Var h1 = tape.add_row(tape.matmul(flat, tape.param(head_w1_)), tape.param(head_b1_));
    h1 = tape.dropout(tape.relu(h1), cfg_.dropout);
    ad::Var h2 = tape.add_row(tape.matmul(h1, tape.param(head_w2_)), tape.param(head_b2_));
    h2 = tape.dropout(tape.relu(h2), cfg_.dropout);
    return tape.add_row(tape.matmul(h2, tape.param(out_w_)), tape.param(out_b_));
}

Eigen::VectorXd Model::predict(const std::vector<Eigen::MatrixXd>& epochs) {
    ad::Tape tape(0);
    tape.train_mode = false;
    ad::Var logits = forward(tape, epochs);
    Eigen::VectorXd out(cfg_.classes);
    for (int c = 0; c < cfg_.classes; ++c) {
        out(c) = tape.value(logits).data[static_cast<std::size_t>(c)];
    }
    return out;
}

AuditReport audit_structure(const ad::Tape& tape, int features_node) {
    AuditReport report;
    std::set<int> visited;
    std::set<ad::OpKind> kinds;
    std::vector<int> stack{features_node};

    const auto whitelisted = [&tape](const ad::Node& n) {
        using ad::OpKind;
        switch (n.kind) {
            case OpKind::Add:
            case OpKind::AddRow:
            case OpKind::ScalarMul:
            case OpKind::Attend:
            case OpKind::Relu:
            case OpKind::MeanRows:
            case OpKind::ChunkMean:
            case OpKind::LayerNorm:
            case OpKind::Dropout:
            case OpKind::ConcatRows:
            case OpKind::SliceRows:
                return true;
            case OpKind::MatMul: {
                // A linear map of tokens is permissible only when it is a
                // triangular map with learned weights.
                const auto& w = tape.node(n.inputs[1]);
                return w.kind == OpKind::Param && w.shape.size() == 2 &&
                       is_triangular_length(w.shape[0]) && is_triangular_length(w.shape[1]);
            }
            default:
                return false;
        }
    };

    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        if (!visited.insert(id).second) continue;
        const ad::Node& n = tape.node(id);
        if (n.kind == ad::OpKind::Input || n.kind == ad::OpKind::Param) continue;
        kinds.insert(n.kind);
        if (!whitelisted(n)) {
            report.ok = false;
            report.offending.emplace_back(id, n.kind);
        }
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
            // Coefficient operands (attention maps, learned scalar weights)
            // are not token data; their computation is exempt.
            if (static_cast<int>(i) == n.coeff_input) continue;
            stack.push_back(n.inputs[i]);
        }
    }
    report.visited_kinds.assign(kinds.begin(), kinds.end());
    return report;
}

} // namespace spdseq::model
