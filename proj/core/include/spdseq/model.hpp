#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "spdseq/autodiff.hpp"
#include "spdseq/tokenization.hpp"

namespace spdseq::model {

/// 30 segments x 7 channels, the fixed per-epoch token count.
inline constexpr int kIntraSequenceLength = 210;

enum class MhaKind { SP, CLASSIC };

struct ModelConfig {
    int sequence_length = 21;   // L, odd
    int context = 10;           // ell, L == 2*ell + 1
    int feature_tokens = 7;     // t, must divide 210
    int p = 26;                 // post-map matrix dim; token dim d(p)
    int heads = 3;
    int ff_dim = 903;           // triangular feed-forward width
    int layers_intra = 2;
    int layers_inter = 2;
    double dropout = 0.1;
    double label_smoothing = 0.1;
    int classes = 5;
    MhaKind mha = MhaKind::SP;
    bool learned_head_weights = false;   // SP head combination: softmax weights vs mean
    bool inter_positional_encoding = true;

    int token_dim() const { return p * (p + 1) / 2; }
    void validate() const;
};

/// Per-layer attention parameters already registered on a tape.
struct AttentionVars {
    std::vector<ad::Var> wq;  // per head, d x d/h
    std::vector<ad::Var> wk;
    std::vector<ad::Var> wv;        // classic only
    std::optional<ad::Var> wo;      // classic only, d x d
    std::optional<ad::Var> head_logits;  // SP learned head weights, [heads]
};

struct EncoderLayerVars {
    AttentionVars attn;
    ad::Var ff_w1, ff_b1, ff_w2, ff_b2;
    ad::Var ln1_gain, ln1_offset, ln2_gain, ln2_offset;
};

/// Learnable positional encoding: adds the first seq rows of the table.
/// Throws SequenceTooLong when the input has more rows than the table.
ad::Var positional_encoding(ad::Tape& tape, ad::Var tokens, ad::Var table);

/// Structure-preserving multihead attention. Attention maps are computed
/// exactly as in standard MHA, but the value tensor is left unprojected:
/// output = combine_i(A_i * tokens), combined as the head mean (or learned
/// nonnegative weights summing to one). Every output token is a convex
/// combination of input tokens.
ad::Var sp_mha(ad::Tape& tape, ad::Var tokens, const AttentionVars& vars, int heads,
               std::vector<ad::Var>* attention_maps = nullptr);

/// Standard multihead attention with per-head value projections,
/// concatenation and output projection. Ablation only.
ad::Var classic_mha(ad::Tape& tape, ad::Var tokens, const AttentionVars& vars, int heads,
                    std::vector<ad::Var>* attention_maps = nullptr);

/// Post-norm residual encoder layer:
///   x' = LN(x + MHA(x)); y = LN(x' + FF(x'))
/// with FF = triangular map -> ReLU -> dropout -> triangular map.
ad::Var encoder_layer(ad::Tape& tape, ad::Var tokens, const EncoderLayerVars& vars,
                      const ModelConfig& cfg, std::vector<ad::Var>* attention_maps = nullptr);

/// Optional instrumentation of a forward pass.
struct ForwardTrace {
    std::vector<int> premapped_nodes;   // per epoch, output of the shared input map
    int features_node = -1;             // t x d(p) central features before the flatten
    std::vector<ad::Var> attention_maps;
};

/// The full sequence-to-element classifier: shared triangular input map,
/// intra-epoch encoder with chunked mean pooling to t feature tokens,
/// inter-epoch encoder over the L*t sequence, Linear+ head on the central
/// epoch's tokens.
class Model {
public:
    Model(ModelConfig cfg, int input_token_length, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    int input_token_length() const { return input_token_length_; }

    std::vector<ad::Parameter*> parameters();
    std::vector<const ad::Parameter*> parameters() const;
    long parameter_count() const;
    long attention_parameter_count() const;

    /// One item: L epochs of 210 x d(m) tokens. Returns [1 x classes] logits.
    ad::Var forward(ad::Tape& tape, const std::vector<Eigen::MatrixXd>& epochs,
                    ForwardTrace* trace = nullptr);

    /// Eval-mode logits (dropout off), no gradient use.
    Eigen::VectorXd predict(const std::vector<Eigen::MatrixXd>& epochs);

private:
    struct LayerParams {
        std::vector<ad::Parameter> wq, wk, wv;
        std::optional<ad::Parameter> wo;
        std::optional<ad::Parameter> head_logits;
        ad::Parameter ff_w1, ff_b1, ff_w2, ff_b2;
        ad::Parameter ln1_gain, ln1_offset, ln2_gain, ln2_offset;
    };

    LayerParams make_layer(const std::string& prefix, Rng& rng);
    EncoderLayerVars register_layer(ad::Tape& tape, LayerParams& layer);
    void collect(std::vector<ad::Parameter*>& out);

    ModelConfig cfg_;
    int input_token_length_;
    ad::Parameter premap_w_, premap_b_;
    ad::Parameter pos_intra_, pos_inter_;
    std::vector<LayerParams> intra_, inter_;
    ad::Parameter head_w1_, head_b1_, head_w2_, head_b2_, out_w_, out_b_;
};

/// Tape audit for the structure-preservation claim: walks the value path
/// backward from the pre-flatten features node and verifies every operation
/// is a token linear combination (convex attention application, learned
/// scalar weight, mean pooling, residual add, bias), a triangular linear
/// map, an elementwise ReLU/dropout, or a layer norm. Attention-map
/// computation feeds coefficient operands and is exempt, matching the
/// model's claim.
struct AuditReport {
    bool ok = true;
    std::vector<std::pair<int, ad::OpKind>> offending;  // node id, kind
    std::vector<ad::OpKind> visited_kinds;              // distinct kinds seen
};

AuditReport audit_structure(const ad::Tape& tape, int features_node);

} // namespace spdseq::model
