#include "spdseq/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "spdseq/geometry.hpp"

namespace spdseq::ad {

namespace {

constexpr std::uint64_t kGradCheckTapeSeed = 0x6badcafe;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMajor>;
using MapC = Eigen::Map<const RowMajor>;

MapC as_matrix(const TensorData& t) {
    return MapC(t.data.data(), t.rows(), t.cols());
}

MapM as_matrix(TensorData& t) {
    return MapM(t.data.data(), t.rows(), t.cols());
}

void require_2d(const Node& n, const char* what) {
    if (n.shape.size() != 2) {
        throw ShapeMismatch(std::string(what) + ": expected a rank-2 tensor");
    }
}

[[noreturn]] void shape_error(const char* what, const Shape& a, const Shape& b) {
    std::ostringstream os;
    os << what << ": incompatible shapes [";
    for (std::size_t i = 0; i < a.size(); ++i) os << (i ? "," : "") << a[i];
    os << "] vs [";
    for (std::size_t i = 0; i < b.size(); ++i) os << (i ? "," : "") << b[i];
    os << "]";
    throw ShapeMismatch(os.str());
}

} // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

TensorData::TensorData(Shape s, double fill) : shape(std::move(s)) {
    data.assign(numel(shape), fill);
}

TensorData::TensorData(const Eigen::MatrixXd& m)
    : shape{static_cast<int>(m.rows()), static_cast<int>(m.cols())} {
    data.resize(numel(shape));
    MapM(data.data(), m.rows(), m.cols()) = m;
}

TensorData::TensorData(const Eigen::VectorXd& v) : shape{static_cast<int>(v.size())} {
    data.assign(v.data(), v.data() + v.size());
}

int TensorData::rows() const { return shape.empty() ? 1 : shape[0]; }

int TensorData::cols() const {
    if (shape.size() >= 2) return shape[1];
    return 1;
}

Eigen::MatrixXd TensorData::matrix() const {
    if (shape.size() == 1) {
        // A rank-1 tensor views as a row vector.
        return MapC(data.data(), 1, shape[0]);
    }
    return as_matrix(*this);
}

Eigen::VectorXd TensorData::vector() const {
    Eigen::VectorXd v(static_cast<long>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) v(static_cast<long>(i)) = data[i];
    return v;
}

const char* to_string(OpKind k) {
    switch (k) {
        case OpKind::Input: return "Input";
        case OpKind::Param: return "Param";
        case OpKind::Add: return "Add";
        case OpKind::AddRow: return "AddRow";
        case OpKind::Sub: return "Sub";
        case OpKind::ScalarMul: return "ScalarMul";
        case OpKind::Mul: return "Mul";
        case OpKind::MatMul: return "MatMul";
        case OpKind::Attend: return "Attend";
        case OpKind::Relu: return "Relu";
        case OpKind::MeanRows: return "MeanRows";
        case OpKind::ChunkMean: return "ChunkMean";
        case OpKind::Reshape: return "Reshape";
        case OpKind::Transpose: return "Transpose";
        case OpKind::Softmax: return "Softmax";
        case OpKind::LayerNorm: return "LayerNorm";
        case OpKind::Dropout: return "Dropout";
        case OpKind::ConcatRows: return "ConcatRows";
        case OpKind::SliceRows: return "SliceRows";
        case OpKind::CrossEntropy: return "CrossEntropy";
        case OpKind::MatrixLog: return "MatrixLog";
    }
    return "?";
}

Tape::Tape(std::uint64_t dropout_seed) : dropout_rng_(dropout_seed) {}

void Tape::check_live() const {
    if (consumed_) {
        throw StaleTape("tape already differentiated; build a fresh tape for the next step");
    }
}

Var Tape::emit(Node node) {
    check_live();
    node.grad = TensorData(node.shape, 0.0);
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(TensorData value, bool requires_grad) {
    Node n;
    n.kind = OpKind::Input;
    n.shape = value.shape;
    n.requires_grad = requires_grad;
    n.value = std::move(value);
    return emit(std::move(n));
}

Var Tape::param(Parameter& p) {
    Node n;
    n.kind = OpKind::Param;
    n.shape = p.value.shape;
    n.requires_grad = true;
    n.param = &p;
    n.value = p.value;
    return emit(std::move(n));
}

namespace {
bool any_grad(const Tape& t, const std::vector<int>& ids) {
    for (int id : ids) {
        if (t.node(id).requires_grad) return true;
    }
    return false;
}
} // namespace

Var Tape::add(Var a, Var b) {
    const Node& na = node(a.id);
    const Node& nb = node(b.id);
    if (na.shape != nb.shape) shape_error("add", na.shape, nb.shape);
    Node n;
    n.kind = OpKind::Add;
    n.shape = na.shape;
    n.inputs = {a.id, b.id};
    n.requires_grad = any_grad(*this, n.inputs);
    n.value = TensorData(n.shape);
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value.data[i] = na.value.data[i] + nb.value.data[i];
    }
    n.backward = [](Tape& t, const Node& self) {
        for (int in : self.inputs) {
            auto& g = t.mutable_node(in).grad;
            for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i];
        }
    };
    return emit(std::move(n));
}

Var Tape::add_row(Var x, Var row) {
    const Node& nx = node(x.id);
    const Node& nr = node(row.id);
    require_2d(nx, "add_row");
    if (static_cast<std::size_t>(nx.shape[1]) != nr.value.size()) {
        shape_error("add_row", nx.shape, nr.shape);
    }
    Node n;
    n.kind = OpKind::AddRow;
    n.shape = nx.shape;
    n.inputs = {x.id, row.id};
    n.requires_grad = any_grad(*this, n.inputs);
    n.value = nx.value;
    const int cols = nx.shape[1];
    for (int r = 0; r < nx.shape[0]; ++r) {
        for (int c = 0; c < cols; ++c) {
            n.value.data[static_cast<std::size_t>(r) * cols + c] +=
                nr.value.data[static_cast<std::size_t>(c)];
        }
    }
    n.backward = [](Tape& t, const Node& self) {
        auto& gx = t.mutable_node(self.inputs[0]).grad;
        auto& gr = t.mutable_node(self.inputs[1]).grad;
        const int rows = self.shape[0];
        const int cols = self.shape[1];
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                const double g = self.grad.data[static_cast<std::size_t>(r) * cols + c];
                gx.data[static_cast<std::size_t>(r) * cols + c] += g;
                gr.data[static_cast<std::size_t>(c)] += g;
            }
        }
    };
    return emit(std::move(n));
}

Var Tape::sub(Var a, Var b) {
    const Node& na = node(a.id);
    const Node& nb = node(b.id);
    if (na.shape != nb.shape) shape_error("sub", na.shape, nb.shape);
    Node n;
    n.kind = OpKind::Sub;
    n.shape = na.shape;
    n.inputs = {a.id, b.id};
    n.requires_grad = any_grad(*this, n.inputs);
    n.value = TensorData(n.shape);
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value.data[i] = na.value.data[i] - nb.value.data[i];
    }
    n.backward = [](Tape& t, const Node& self) {
        auto& ga = t.mutable_node(self.inputs[0]).grad;
        auto& gb = t.mutable_node(self.inputs[1]).grad;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            ga.data[i] += self.grad.data[i];
            gb.data[i] -= self.grad.data[i];
        }
    };
    return emit(std::move(n));
}

Var Tape::scalar_mul(Var x, double c) {
    const Node& nx = node(x.id);
    Node n;
    n.kind = OpKind::ScalarMul;
    n.shape = nx.shape;
    n.inputs = {x.id};
    n.requires_grad = nx.requires_grad;
    n.value = nx.value;
    for (auto& v : n.value.data) v *= c;
    n.backward = [c](Tape& t, const Node& self) {
        auto& gx = t.mutable_node(self.inputs[0]).grad;
        for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += c * self.grad.data[i];
    };
    return emit(std::move(n));
}

Var Tape::scale(Var x, Var scalar) {
    const Node& nx = node(x.id);
    const Node& ns = node(scalar.id);
    if (ns.value.size() != 1) throw ShapeMismatch("scale: weight must be a single value");
    Node n;
    n.kind = OpKind::ScalarMul;
    n.shape = nx.shape;
    n.inputs = {x.id, scalar.id};
    n.coeff_input = 1;
    n.requires_grad = any_grad(*this, n.inputs);
    n.value = nx.value;
    const double c = ns.value.data[0];
    for (auto& v : n.value.data) v *= c;
    n.backward = [](Tape& t, const Node& self) {
        auto& gx = t.mutable_node(self.inputs[0]).grad;
        auto& gs = t.mutable_node(self.inputs[1]).grad;
        const auto& vx = t.node(self.inputs[0]).value;
        const double c = t.node(self.inputs[1]).value.data[0];
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx.data[i] += c * self.grad.data[i];
            gs.data[0] += self.grad.data[i] * vx.data[i];
        }
    };
    return emit(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    const Node& na = node(a.id);
    const Node& nb = node(b.id);
    if (na.shape != nb.shape) shape_error("mul", na.shape, nb.shape);
    Node n;
    n.kind = OpKind::Mul;
    n.shape = na.shape;
    n.inputs = {a.id, b.id};
    n.requires_grad = any_grad(*this, n.inputs);
    n.value = TensorData(n.shape);
    for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value.data[i] = na.value.data[i] * nb.value.data[i];
    }
    n.backward = [](Tape& t, const Node& self) {
        auto& ga = t.mutable_node(self.inputs[0]).grad;
        auto& gb = t.mutable_node(self.inputs[1]).grad;
        const auto& va = t.node(self.inputs[0]).value;
        const auto& vb = t.node(self.inputs[1]).value;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            ga.data[i] += self.grad.data[i] * vb.data[i];
            gb.data[i] += self.grad.data[i] * va.data[i];
        }
    };
    return emit(std::move(n));
}

namespace {

Node make_matmul_node(Tape& t, Var a, Var b, OpKind kind, const char* what) {
    const Node& na = t.node(a.id);
    const Node& nb = t.node(b.id);
    require_2d(na, what);
    require_2d(nb, what);
    if (na.shape[1] != nb.shape[0]) shape_error(what, na.shape, nb.shape);
    Node n;
    n.kind = kind;
    n.shape = {na.shape[0], nb.shape[1]};
    n.inputs = {a.id, b.id};
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.value = TensorData(n.shape);
    as_matrix(n.value) = as_matrix(na.value) * as_matrix(nb.value);
    n.backward = [](Tape& tt, const Node& self) {
        auto& ga = tt.mutable_node(self.inputs[0]).grad;
        auto& gb = tt.mutable_node(self.inputs[1]).grad;
        const auto va = as_matrix(tt.node(self.inputs[0]).value);
        const auto vb = as_matrix(tt.node(self.inputs[1]).value);
        const auto g = as_matrix(self.grad);
        as_matrix(ga) += g * vb.transpose();
        as_matrix(gb) += va.transpose() * g;
    };
    return n;
}

} // namespace

Var Tape::matmul(Var a, Var b) {
    return emit(make_matmul_node(*this, a, b, OpKind::MatMul, "matmul"));
}

Var Tape::attend(Var attention, Var values) {
    const Node& na = node(attention.id);
    if (na.shape.size() != 2 || na.shape[0] != na.shape[1]) {
        throw ShapeMismatch("attend: attention map must be square");
    }
    Node n = make_matmul_node(*this, attention, values, OpKind::Attend, "attend");
    n.coeff_input = 0;  // the attention-map operand; the structure audit prunes there
    return emit(std::move(n));
}

Var Tape::relu(Var x) {
    const Node& nx = node(x.id);
    Node n;
    n.kind = OpKind::Relu;
    n.shape = nx.shape;
    n.inputs = {x.id};
    n.requires_grad = nx.requires_grad;
    n.value = nx.value;
    for (auto& v : n.value.data) v = std::max(v, 0.0);
    n.backward = [](Tape& t, const Node& self) {
        auto& gx = t.mutable_node(self.inputs[0]).grad;
        const auto& vx = t.node(self.inputs[0]).value;
        for (std::size_t i = 0; i < gx.size(); ++i) {
            if (vx.data[i] > 0.0) gx.data[i] += self.grad.data[i];
        }
    };
    return emit(std::move(n));
}

Var Tape::mean_rows(Var x) {
    const Node& nx = node(x.id);
    require_2d(nx, "mean_rows");
    Node n;
    n.kind = OpKind::MeanRows;
    n.shape = {1, nx.shape[1]};
    n.inputs = {x.id};
    n.requires_grad = nx.requires_grad;
    n.value = TensorData(n.shape);
    as_matrix(n.value) = as_matrix(nx.value).colwise().mean();
    n.backward = [](Tape& t, const Node& self) {
        auto& gx = t.mutable_node(self.inputs[0]).grad;
        const int rows = t.node(self.inputs[0]).shape[0];
        const double inv = 1.0 / rows;
        const int cols = self.shape[1];
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                gx.data[static_cast<std::size_t>(r) * cols + c] +=
                    inv * self.grad.data[static_cast<std::size_t>(c)];
            }
        }
    };
    return emit(std::move(n));
}

Var Tape::chunk_mean(Var x, int chunks) {
    const Node& nx = node(x.id);
    require_2d(nx, "chunk_mean");
    if (chunks < 1 || nx.shape[0] % chunks != 0) {
        std::ostringstream os;
        os << "chunk_mean: " << chunks << " chunks do not divide " << nx.shape[0] << " rows";
        throw InvalidChunking(os.str());
    }
    const int chunk_rows = nx.shape[0] / chunks;
    Node n;
    n.kind = OpKind::ChunkMean;
    n.shape = {chunks, nx.shape[1]};
    n.inputs = {x.id};
    n.requires_grad = nx.requires_grad;
    n.value = TensorData(n.shape);
    {
        auto out = as_matrix(n.value);
        const auto in = as_matrix(nx.value);
        for (int c = 0; c < chunks; ++c) {
            out.row(c) = in.middleRows(c * chunk_rows, chunk_rows).colwise().mean();
        }
    }
    n.backward = [chunk_rows](Tape& t, const Node& self) {
        auto gx = as_matrix(t.mutable_node(self.inputs[0]).grad);
        const auto g = as_matrix(self.grad);
        const double inv = 1.0 / chunk_rows;
        for (int c = 0; c < self.shape[0]; ++c) {
            for (int r = 0; r < chunk_rows; ++r) {
                gx.row(c * chunk_rows + r) += inv * g.row(c);
            }
        }
    };
    return emit(std::move(n));
}

Var Tape::reshape(Var x, Shape shape) {
    const Node& nx = node(x.id);
    if (numel(shape) != nx.value.size()) shape_error("reshape", nx.shape, shape);
    Node n;
    n.kind = OpKind::Reshape;
    n.shape = shape;
    n.inputs = {x.id};
    n.requires_grad = nx.requires_grad;
    n.value = nx.value;
    n.value.shape = std::move(shape);
    n.backward = [](Tape& t, const Node& self) {
        auto& gx = t.mutable_node(self.inputs[0]).grad;
        for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += self.grad.data[i];
    };
    return emit(std::move(n));
}

Var Tape::transpose(Var x) {
    const Node& nx = node(x.id);
    require_2d(nx, "transpose");
    Node n;
    n.kind = OpKind::Transpose;
    n.shape = {nx.shape[1], nx.shape[0]};
    n.inputs = {x.id};
    n.requires_grad = nx.requires_grad;
    n.value = TensorData(n.shape);
    as_matrix(n.value) = as_matrix(nx.value).transpose();
    n.backward = [](Tape& t, const Node& self) {
        auto gx = as_matrix(t.mutable_node(self.inputs[0]).grad);
        gx += as_matrix(self.grad).transpose();
    };
    return emit(std::move(n));
}

Var Tape::softmax_rows(Var x) {
    const Node& nx = node(x.id);
    require_2d(nx, "softmax_rows");
    Node n;
    n.kind = OpKind::Softmax;
    n.shape = nx.shape;
    n.inputs = {x.id};
    n.requires_grad = nx.requires_grad;
    n.value = TensorData(n.shape);
    {
        auto out = as_matrix(n.value);
        const auto in = as_matrix(nx.value);
        for (int r = 0; r < nx.shape[0]; ++r) {
            const double mx = in.row(r).maxCoeff();
            out.row(r) = (in.row(r).array() - mx).exp();
            out.row(r) /= out.row(r).sum();
        }
    }
    n.backward = [](Tape& t, const Node& self) {
        auto gx = as_matrix(t.mutable_node(self.inputs[0]).grad);
        const auto y = as_matrix(self.value);
        const auto g = as_matrix(self.grad);
        for (int r = 0; r < self.shape[0]; ++r) {
            const double dot = g.row(r).dot(y.row(r));
            gx.row(r) += (g.row(r).array() - dot).matrix().cwiseProduct(y.row(r));
        }
    };
    return emit(std::move(n));
}

Var Tape::layer_norm(Var x, Var gain, Var offset) {
    const Node& nx = node(x.id);
    const Node& ng = node(gain.id);
    const Node& nb = node(offset.id);
    require_2d(nx, "layer_norm");
    const int cols = nx.shape[1];
    if (static_cast<std::size_t>(cols) != ng.value.size() ||
        static_cast<std::size_t>(cols) != nb.value.size()) {
        shape_error("layer_norm", nx.shape, ng.shape);
    }
    constexpr double kEps = 1e-5;
    Node n;
    n.kind = OpKind::LayerNorm;
    n.shape = nx.shape;
    n.inputs = {x.id, gain.id, offset.id};
    n.requires_grad = any_grad(*this, n.inputs);
    n.value = TensorData(n.shape);
    const int rows = nx.shape[0];
    // Save normalized rows and per-row inverse stddev for backward.
    auto xhat = std::make_shared<RowMajor>(rows, cols);
    auto inv_std = std::make_shared<Eigen::VectorXd>(rows);
    {
        const auto in = as_matrix(nx.value);
        auto out = as_matrix(n.value);
        for (int r = 0; r < rows; ++r) {
            const double mean = in.row(r).mean();
            const double var = (in.row(r).array() - mean).square().mean();
            const double is = 1.0 / std::sqrt(var + kEps);
            (*inv_std)(r) = is;
            xhat->row(r) = ((in.row(r).array() - mean) * is).matrix();
            for (int c = 0; c < cols; ++c) {
                out(r, c) = (*xhat)(r, c) * ng.value.data[static_cast<std::size_t>(c)] +
                            nb.value.data[static_cast<std::size_t>(c)];
            }
        }
    }
    n.backward = [xhat, inv_std](Tape& t, const Node& self) {
        auto gx = as_matrix(t.mutable_node(self.inputs[0]).grad);
        auto& ggain = t.mutable_node(self.inputs[1]).grad;
        auto& goffset = t.mutable_node(self.inputs[2]).grad;
        const auto& gain_v = t.node(self.inputs[1]).value;
        const auto g = as_matrix(self.grad);
        const int rows = self.shape[0];
        const int cols = self.shape[1];
        for (int r = 0; r < rows; ++r) {
            Eigen::RowVectorXd dxhat(cols);
            for (int c = 0; c < cols; ++c) {
                const double gc = g(r, c);
                ggain.data[static_cast<std::size_t>(c)] += gc * (*xhat)(r, c);
                goffset.data[static_cast<std::size_t>(c)] += gc;
                dxhat(c) = gc * gain_v.data[static_cast<std::size_t>(c)];
            }
            const double m1 = dxhat.mean();
            const double m2 = (dxhat.cwiseProduct(xhat->row(r))).mean();
            gx.row(r) += (((dxhat.array() - m1) - xhat->row(r).array() * m2) *
                          (*inv_std)(r)).matrix();
        }
    };
    return emit(std::move(n));
}

Var Tape::dropout(Var x, double rate) {
    if (rate < 0.0 || rate >= 1.0) throw InvalidEps("dropout: rate must lie in [0, 1)");
    const Node& nx = node(x.id);
    Node n;
    n.kind = OpKind::Dropout;
    n.shape = nx.shape;
    n.inputs = {x.id};
    n.requires_grad = nx.requires_grad;
    n.value = nx.value;
    auto mask = std::make_shared<std::vector<double>>(nx.value.size(), 1.0);
    if (train_mode && rate > 0.0) {
        const double keep = 1.0 - rate;
        for (std::size_t i = 0; i < mask->size(); ++i) {
            (*mask)[i] = dropout_rng_.uniform() < keep ? 1.0 / keep : 0.0;
            n.value.data[i] *= (*mask)[i];
        }
    }
    n.backward = [mask](Tape& t, const Node& self) {
        auto& gx = t.mutable_node(self.inputs[0]).grad;
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx.data[i] += self.grad.data[i] * (*mask)[i];
        }
    };
    return emit(std::move(n));
}

Var Tape::concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeMismatch("concat_rows: empty input list");
    int rows = 0;
    const Node& first = node(xs.front().id);
    require_2d(first, "concat_rows");
    const int cols = first.shape[1];
    for (const Var& v : xs) {
        const Node& nv = node(v.id);
        require_2d(nv, "concat_rows");
        if (nv.shape[1] != cols) shape_error("concat_rows", nv.shape, first.shape);
        rows += nv.shape[0];
    }
    Node n;
    n.kind = OpKind::ConcatRows;
    n.shape = {rows, cols};
    for (const Var& v : xs) n.inputs.push_back(v.id);
    n.requires_grad = any_grad(*this, n.inputs);
    n.value = TensorData(n.shape);
    {
        auto out = as_matrix(n.value);
        int r = 0;
        for (const Var& v : xs) {
            const Node& nv = node(v.id);
            out.middleRows(r, nv.shape[0]) = as_matrix(nv.value);
            r += nv.shape[0];
        }
    }
    n.backward = [](Tape& t, const Node& self) {
        const auto g = as_matrix(self.grad);
        int r = 0;
        for (int in : self.inputs) {
            auto& gn = t.mutable_node(in).grad;
            const int nr = t.node(in).shape[0];
            as_matrix(gn) += g.middleRows(r, nr);
            r += nr;
        }
    };
    return emit(std::move(n));
}

Var Tape::slice_rows(Var x, int begin, int end) {
    const Node& nx = node(x.id);
    require_2d(nx, "slice_rows");
    if (begin < 0 || end > nx.shape[0] || begin >= end) {
        throw ShapeMismatch("slice_rows: invalid row range");
    }
    Node n;
    n.kind = OpKind::SliceRows;
    n.shape = {end - begin, nx.shape[1]};
    n.inputs = {x.id};
    n.requires_grad = nx.requires_grad;
    n.value = TensorData(n.shape);
    as_matrix(n.value) = as_matrix(nx.value).middleRows(begin, end - begin);
    n.backward = [begin](Tape& t, const Node& self) {
        auto gx = as_matrix(t.mutable_node(self.inputs[0]).grad);
        gx.middleRows(begin, self.shape[0]) += as_matrix(self.grad);
    };
    return emit(std::move(n));
}

Var Tape::cross_entropy_label_smoothing(Var logits, int target, double eps) {
    if (eps < 0.0 || eps >= 1.0) throw InvalidEps("cross_entropy: eps must lie in [0, 1)");
    const Node& nl = node(logits.id);
    const std::size_t classes = nl.value.size();
    if (classes < 2) throw ShapeMismatch("cross_entropy: need at least 2 classes");
    if (nl.shape.size() == 2 && nl.shape[0] != 1) {
        throw ShapeMismatch("cross_entropy: logits must be a single row");
    }
    if (target < 0 || static_cast<std::size_t>(target) >= classes) {
        throw ShapeMismatch("cross_entropy: target outside class range");
    }
    Node n;
    n.kind = OpKind::CrossEntropy;
    n.shape = {1};
    n.inputs = {logits.id};
    n.requires_grad = nl.requires_grad;

    const double c = static_cast<double>(classes);
    double mx = nl.value.data[0];
    for (double v : nl.value.data) mx = std::max(mx, v);
    double sum_exp = 0.0;
    for (double v : nl.value.data) sum_exp += std::exp(v - mx);
    const double lse = mx + std::log(sum_exp);
    double loss = 0.0;
    auto q = std::make_shared<std::vector<double>>(classes);
    for (std::size_t i = 0; i < classes; ++i) {
        (*q)[i] = eps / c + (static_cast<int>(i) == target ? 1.0 - eps : 0.0);
        loss -= (*q)[i] * (nl.value.data[i] - lse);
    }
    n.value = TensorData({1});
    n.value.data[0] = loss;
    n.backward = [q, lse](Tape& t, const Node& self) {
        auto& gl = t.mutable_node(self.inputs[0]).grad;
        const auto& vl = t.node(self.inputs[0]).value;
        const double g = self.grad.data[0];
        for (std::size_t i = 0; i < gl.size(); ++i) {
            const double softmax_i = std::exp(vl.data[i] - lse);
            gl.data[i] += g * (softmax_i - (*q)[i]);
        }
    };
    return emit(std::move(n));
}

Var Tape::matrix_log(Var x) {
    const Node& nx = node(x.id);
    require_2d(nx, "matrix_log");
    if (nx.shape[0] != nx.shape[1]) throw ShapeMismatch("matrix_log: matrix must be square");
    auto saved = std::make_shared<SpdMatrix>(nx.value.matrix());
    Node n;
    n.kind = OpKind::MatrixLog;
    n.shape = nx.shape;
    n.inputs = {x.id};
    n.requires_grad = nx.requires_grad;
    n.value = TensorData(spdseq::matrix_log(*saved).mat());
    n.backward = [saved](Tape& t, const Node& self) {
        auto& gx = t.mutable_node(self.inputs[0]).grad;
        // Symmetrizing the upstream cotangent keeps the result consistent
        // with per-entry central differences on the symmetrized input.
        const SymMatrix cot = matrix_log_vjp(*saved, SymMatrix(self.grad.matrix()));
        as_matrix(gx) += cot.mat();
    };
    return emit(std::move(n));
}

void Tape::backward(Var loss) {
    check_live();
    if (!loss.valid() || loss.tape != this) throw Error("backward: loss from another tape");
    Node& ln = mutable_node(loss.id);
    if (ln.value.size() != 1) throw NonScalarLoss("backward: loss must be scalar");
    consumed_ = true;
    ln.grad.data[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.requires_grad) continue;
        if (n.backward) n.backward(*this, n);
        if (n.param) {
            for (std::size_t j = 0; j < n.grad.size(); ++j) {
                n.param->grad.data[j] += n.grad.data[j];
            }
        }
    }
}

GradCheckReport grad_check(const LossFn& fn, const std::vector<Parameter*>& params,
                           double step, double tolerance) {
    GradCheckReport report;
    report.tolerance = tolerance;

    // Analytic gradients.
    for (Parameter* p : params) p->zero_grad();
    {
        Tape tape(kGradCheckTapeSeed);
        Var loss = fn(tape);
        tape.backward(loss);
    }
    std::vector<TensorData> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    const auto eval = [&fn]() {
        Tape tape(kGradCheckTapeSeed);
        Var loss = fn(tape);
        return tape.value(loss).data[0];
    };

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        GradCheckEntry entry;
        entry.name = p->name;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + step;
            const double fp = eval();
            p->value.data[i] = saved - step;
            const double fm = eval();
            p->value.data[i] = saved;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[pi].data[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            entry.max_rel_error = std::max(entry.max_rel_error, std::abs(a - numeric) / denom);
        }
        worst = std::max(worst, entry.max_rel_error);
        report.entries.push_back(std::move(entry));
    }
    report.worst = worst;
    report.passed = worst <= tolerance;
    return report;
}

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params, double lr, double beta1,
                             double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Parameter* p : params_) {
        m_.emplace_back(p->value.shape, 0.0);
        v_.emplace_back(p->value.shape, 0.0);
    }
}

void AdamOptimizer::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter* p = params_[i];
        for (std::size_t j = 0; j < p->value.size(); ++j) {
            const double g = p->grad.data[j];
            m_[i].data[j] = beta1_ * m_[i].data[j] + (1.0 - beta1_) * g;
            v_[i].data[j] = beta2_ * v_[i].data[j] + (1.0 - beta2_) * g * g;
            const double mhat = m_[i].data[j] / bc1;
            const double vhat = v_[i].data[j] / bc2;
            p->value.data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamOptimizer::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

} // namespace spdseq::ad
