#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spdseq/errors.hpp"
#include "spdseq/rng.hpp"

namespace spdseq::ad {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);

/// Dense row-major f64 tensor. Rank 1 or 2 in practice; rank-2 tensors map
/// onto Eigen for the heavy operations.
struct TensorData {
    Shape shape;
    std::vector<double> data;

    TensorData() = default;
    TensorData(Shape s, double fill = 0.0);
    explicit TensorData(const Eigen::MatrixXd& m);
    explicit TensorData(const Eigen::VectorXd& v);

    std::size_t size() const { return data.size(); }
    int rows() const;
    int cols() const;
    Eigen::MatrixXd matrix() const;
    Eigen::VectorXd vector() const;
};

/// A named, trainable tensor. Parameters live outside the tape and persist
/// across training steps; backward() accumulates into `grad`.
struct Parameter {
    std::string name;
    TensorData value;
    TensorData grad;

    Parameter() = default;
    Parameter(std::string n, TensorData v)
        : name(std::move(n)), value(std::move(v)), grad(value.shape, 0.0) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

/// Operation labels recorded per node. The structure audit walks these, so
/// every primitive keeps an honest label.
enum class OpKind {
    Input,
    Param,
    Add,
    AddRow,
    Sub,
    ScalarMul,
    Mul,
    MatMul,
    Attend,     // attention map applied to value rows; map input is exempt from the audit
    Relu,
    MeanRows,
    ChunkMean,
    Reshape,
    Transpose,
    Softmax,
    LayerNorm,
    Dropout,
    ConcatRows,
    SliceRows,
    CrossEntropy,
    MatrixLog,
};

const char* to_string(OpKind k);

class Tape;

/// Lightweight handle to a tape node.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
};

struct Node {
    OpKind kind = OpKind::Input;
    Shape shape;
    std::vector<int> inputs;
    int coeff_input = -1;          // index into `inputs` of a coefficient operand
                                   // (Attend: the map; scale: the scalar weight)
    bool requires_grad = false;
    Parameter* param = nullptr;
    TensorData value;
    TensorData grad;
    std::function<void(Tape&, const Node&)> backward;
};

/// Reverse-mode tape. Nodes are recorded in topological order by
/// construction and visited in exact reverse during backward(). A tape is
/// one-shot: recording or differentiating after backward() raises StaleTape.
class Tape {
public:
    explicit Tape(std::uint64_t dropout_seed = 0);

    bool train_mode = true;

    // Leaves
    Var input(TensorData value, bool requires_grad = false);
    Var param(Parameter& p);

    // Primitives
    Var add(Var a, Var b);
    Var add_row(Var x, Var row);            // broadcast a [n] vector over rows
    Var sub(Var a, Var b);
    Var scalar_mul(Var x, double c);
    Var scale(Var x, Var scalar);           // scalar is a [1] tensor (learned weight)
    Var mul(Var a, Var b);                  // elementwise
    Var matmul(Var a, Var b);
    Var attend(Var attention, Var values);  // attention [m x m] row-stochastic, values [m x n]
    Var relu(Var x);
    Var mean_rows(Var x);                   // [m x n] -> [1 x n]
    Var chunk_mean(Var x, int chunks);      // [m x n] -> [chunks x n]
    Var reshape(Var x, Shape shape);
    Var transpose(Var x);
    Var softmax_rows(Var x);
    Var layer_norm(Var x, Var gain, Var offset);  // token-wise over the last axis
    Var dropout(Var x, double rate);        // identity in eval mode
    Var concat_rows(const std::vector<Var>& xs);
    Var slice_rows(Var x, int begin, int end);
    Var cross_entropy_label_smoothing(Var logits, int target, double eps);
    Var matrix_log(Var x);                  // SPD input; backward uses the Loewner rule

    /// Reverse sweep from a scalar loss; accumulates into Parameter::grad.
    void backward(Var loss);

    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    Node& mutable_node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const TensorData& value(Var v) const { return node(v.id).value; }
    const TensorData& grad(Var v) const { return node(v.id).grad; }
    int size() const { return static_cast<int>(nodes_.size()); }
    bool consumed() const { return consumed_; }

private:
    friend struct Var;
    Var emit(Node node);
    void check_live() const;

    std::vector<Node> nodes_;
    Rng dropout_rng_;
    bool consumed_ = false;
};

/// Builds a scalar loss on the given tape from the current parameter values.
using LossFn = std::function<Var(Tape&)>;

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double worst = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Central-difference check of every component of every parameter against
/// the tape gradients. `fn` must be deterministic (dropout off or masks
/// frozen by a fixed tape seed).
GradCheckReport grad_check(const LossFn& fn, const std::vector<Parameter*>& params,
                           double step, double tolerance);

/// Adaptive-moment gradient descent (bias-corrected first/second moments).
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Parameter*> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    void step();
    void zero_grad();
    double learning_rate() const { return lr_; }

private:
    std::vector<Parameter*> params_;
    std::vector<TensorData> m_;
    std::vector<TensorData> v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

} // namespace spdseq::ad
