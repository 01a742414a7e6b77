#include "prwkv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace prwkv {

namespace {

Precision g_precision = Precision::f64;
thread_local bool g_grad_enabled = true;
thread_local ComputationRecord g_tape;

void round_to_f32(std::vector<double>& v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

using BackwardFn = std::function<void(TensorNode&)>;

Tensor make_op(const char* op, Shape shape, std::vector<double> value,
               std::vector<Tensor> inputs, BackwardFn backward_fn) {
    if (compute_precision() == Precision::f32) round_to_f32(value);
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    if (static_cast<std::int64_t>(node->value.size()) != shape_numel(node->shape)) {
        throw std::logic_error("internal: op " + std::string(op) + " produced " +
                               std::to_string(node->value.size()) + " values for shape " +
                               shape_str(node->shape));
    }
    bool track = false;
    if (grad_enabled()) {
        for (const Tensor& t : inputs) track = track || t.requires_grad();
    }
    if (track) {
        node->requires_grad = true;
        node->is_leaf = false;
        node->op = op;
        node->parents.reserve(inputs.size());
        for (const Tensor& t : inputs) node->parents.push_back(t.node_ptr());
        node->backward_fn = std::move(backward_fn);
        node->tape_gen = g_tape.generation;
        node->tape_pos = static_cast<std::int64_t>(g_tape.nodes.size());
        g_tape.nodes.push_back(node);
    }
    return Tensor(std::move(node));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

std::int64_t last_dim(const Tensor& t) {
    if (t.rank() == 0) throw std::invalid_argument("expected tensor with at least one axis");
    return t.dim(t.rank() - 1);
}

// rows x cols view of an arbitrary-rank tensor, folding all leading axes
std::pair<std::int64_t, std::int64_t> rows_cols(const Tensor& t) {
    std::int64_t c = last_dim(t);
    if (c == 0) throw std::invalid_argument("empty last axis");
    return {t.numel() / c, c};
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (std::int64_t e : s) n *= e;
    return n;
}

void set_compute_precision(Precision p) { g_precision = p; }
Precision compute_precision() { return g_precision; }

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void TensorNode::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

void TensorNode::accumulate_grad(const double* g, std::int64_t n) {
    ensure_grad();
    for (std::int64_t i = 0; i < n; ++i) grad[static_cast<std::size_t>(i)] += g[i];
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return from_data(shape, std::vector<double>(static_cast<std::size_t>(shape_numel(shape)), 0.0),
                     requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    return from_data(shape, std::vector<double>(static_cast<std::size_t>(shape_numel(shape)), v),
                     requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    for (std::int64_t e : shape) {
        if (e <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    if (requires_grad) node->ensure_grad();
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

double Tensor::item() const {
    if (numel() != 1) throw std::logic_error("item(): tensor has " + std::to_string(numel()) + " elements");
    return node_->value[0];
}

void Tensor::set_requires_grad(bool on) {
    if (!node_->is_leaf) throw std::logic_error("requires_grad can only be toggled on leaf tensors");
    node_->requires_grad = on;
    if (on) node_->ensure_grad();
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty()) throw std::logic_error("tensor has no gradient accumulator");
    return node_->grad;
}

std::vector<double>& Tensor::mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void ComputationRecord::clear() {
    nodes.clear();
    ++generation;
}

ComputationRecord& tape() { return g_tape; }

Tensor make_custom_op(const char* op, Shape shape, std::vector<double> value,
                      std::vector<Tensor> inputs, std::function<void(TensorNode&)> backward_fn) {
    return make_op(op, std::move(shape), std::move(value), std::move(inputs), std::move(backward_fn));
}

const TensorNode* first_nonfinite_on_tape() {
    for (const NodePtr& n : g_tape.nodes) {
        for (double v : n->value) {
            if (!std::isfinite(v)) return n.get();
        }
    }
    return nullptr;
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw std::logic_error("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    TensorNode* ln = loss.node();
    if (!ln->requires_grad) {
        throw std::logic_error("backward: loss is not connected to any tracked tensor");
    }
    if (ln->is_leaf) {
        ln->ensure_grad();
        ln->grad[0] += 1.0;
        return;
    }
    if (ln->tape_gen != g_tape.generation) {
        throw std::logic_error("backward: loss was recorded on a cleared tape");
    }
    // mark the ancestors of loss on the tape
    std::vector<char> needed(static_cast<std::size_t>(ln->tape_pos) + 1, 0);
    needed[static_cast<std::size_t>(ln->tape_pos)] = 1;
    for (std::int64_t i = ln->tape_pos; i >= 0; --i) {
        if (!needed[static_cast<std::size_t>(i)]) continue;
        for (const NodePtr& p : g_tape.nodes[static_cast<std::size_t>(i)]->parents) {
            if (!p->requires_grad || p->is_leaf) continue;
            if (p->tape_gen == g_tape.generation && p->tape_pos >= 0 && p->tape_pos < i) {
                needed[static_cast<std::size_t>(p->tape_pos)] = 1;
            }
        }
    }
    // intermediate grads are scratch per traversal; leaves keep accumulating
    for (std::int64_t i = 0; i <= ln->tape_pos; ++i) {
        if (!needed[static_cast<std::size_t>(i)]) continue;
        TensorNode& n = *g_tape.nodes[static_cast<std::size_t>(i)];
        n.ensure_grad();
        std::fill(n.grad.begin(), n.grad.end(), 0.0);
    }
    ln->grad[0] = 1.0;
    for (std::int64_t i = ln->tape_pos; i >= 0; --i) {
        if (!needed[static_cast<std::size_t>(i)]) continue;
        TensorNode& n = *g_tape.nodes[static_cast<std::size_t>(i)];
        n.backward_fn(n);
    }
}

// ---- elementwise -------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    std::vector<double> out(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    return make_op("add", a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
        const std::int64_t m = n.numel();
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate_grad(n.grad.data(), m);
        if (n.parents[1]->requires_grad) n.parents[1]->accumulate_grad(n.grad.data(), m);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    std::vector<double> out(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    return make_op("sub", a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
        const std::int64_t m = n.numel();
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate_grad(n.grad.data(), m);
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            for (std::int64_t i = 0; i < m; ++i)
                n.parents[1]->grad[static_cast<std::size_t>(i)] -= n.grad[static_cast<std::size_t>(i)];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    std::vector<double> out(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    return make_op("mul", a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
        const std::size_t m = n.value.size();
        TensorNode& pa = *n.parents[0];
        TensorNode& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) pa.grad[i] += n.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) pb.grad[i] += n.grad[i] * pa.value[i];
        }
    });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.data());
    for (double& x : out) x += s;
    return make_op("add_scalar", a.shape(), std::move(out), {a}, [](TensorNode& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate_grad(n.grad.data(), n.numel());
    });
}

Tensor mul_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.data());
    for (double& x : out) x *= s;
    return make_op("mul_scalar", a.shape(), std::move(out), {a}, [s](TensorNode& n) {
        TensorNode& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < n.value.size(); ++i) p.grad[i] += s * n.grad[i];
    });
}

// ---- matmul ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    }
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (std::int64_t i = 0; i < m; ++i) {
        double* crow = out.data() + i * n;
        const double* arow = ad + i * k;
        for (std::int64_t l = 0; l < k; ++l) {
            const double av = arow[l];
            if (av == 0.0) continue;
            const double* brow = bd + l * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return make_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& nd) {
        TensorNode& pa = *nd.parents[0];
        TensorNode& pb = *nd.parents[1];
        const double* g = nd.grad.data();
        if (pa.requires_grad) {
            pa.ensure_grad();
            // dA = dC * B^T
            for (std::int64_t i = 0; i < m; ++i) {
                const double* grow = g + i * n;
                double* darow = pa.grad.data() + i * k;
                for (std::int64_t l = 0; l < k; ++l) {
                    const double* brow = pb.value.data() + l * n;
                    double acc = 0.0;
                    for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    darow[l] += acc;
                }
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            // dB = A^T * dC
            for (std::int64_t i = 0; i < m; ++i) {
                const double* arow = pa.value.data() + i * k;
                const double* grow = g + i * n;
                for (std::int64_t l = 0; l < k; ++l) {
                    const double av = arow[l];
                    if (av == 0.0) continue;
                    double* dbrow = pb.grad.data() + l * n;
                    for (std::int64_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
                }
            }
        }
    });
}

// ---- normalization -----------------------------------------------------

namespace {

Tensor layernorm_impl(const char* opname, const Tensor& x, std::int64_t group, const Tensor& gamma,
                      const Tensor& beta, double eps) {
    auto [rows, c] = rows_cols(x);
    if (c % group != 0) throw std::invalid_argument("layernorm: width not divisible by group count");
    if (gamma.numel() != c || beta.numel() != c) {
        throw std::invalid_argument(std::string(opname) + ": affine params must have width " +
                                    std::to_string(c) + ", got " + shape_str(gamma.shape()) + " / " +
                                    shape_str(beta.shape()));
    }
    if (eps <= 0) throw std::invalid_argument("layernorm: eps must be positive");
    const std::int64_t d = c / group;
    const std::int64_t ngroups = rows * group;
    std::vector<double> out(static_cast<std::size_t>(rows * c));
    auto stats = std::make_shared<std::vector<double>>(static_cast<std::size_t>(ngroups) * 2);
    const double* xd = x.data().data();
    const double* gd = gamma.data().data();
    const double* bd = beta.data().data();
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t h = 0; h < group; ++h) {
            const double* xg = xd + r * c + h * d;
            double mean = 0.0;
            for (std::int64_t j = 0; j < d; ++j) mean += xg[j];
            mean /= static_cast<double>(d);
            double var = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
                const double t = xg[j] - mean;
                var += t * t;
            }
            var /= static_cast<double>(d);
            const double rstd = 1.0 / std::sqrt(var + eps);
            const std::int64_t gidx = r * group + h;
            (*stats)[static_cast<std::size_t>(gidx) * 2] = mean;
            (*stats)[static_cast<std::size_t>(gidx) * 2 + 1] = rstd;
            double* og = out.data() + r * c + h * d;
            const double* gg = gd + h * d;
            const double* bg = bd + h * d;
            for (std::int64_t j = 0; j < d; ++j) og[j] = (xg[j] - mean) * rstd * gg[j] + bg[j];
        }
    }
    return make_op(opname, x.shape(), std::move(out), {x, gamma, beta},
                   [rows, group, d, c, stats](TensorNode& n) {
                       TensorNode& px = *n.parents[0];
                       TensorNode& pg = *n.parents[1];
                       TensorNode& pb = *n.parents[2];
                       if (px.requires_grad) px.ensure_grad();
                       if (pg.requires_grad) pg.ensure_grad();
                       if (pb.requires_grad) pb.ensure_grad();
                       const double* g = n.grad.data();
                       for (std::int64_t r = 0; r < rows; ++r) {
                           for (std::int64_t h = 0; h < group; ++h) {
                               const std::int64_t gidx = r * group + h;
                               const double mean = (*stats)[static_cast<std::size_t>(gidx) * 2];
                               const double rstd = (*stats)[static_cast<std::size_t>(gidx) * 2 + 1];
                               const double* xg = px.value.data() + r * c + h * d;
                               const double* gg = pg.value.data() + h * d;
                               const double* dout = g + r * c + h * d;
                               double sum_dy = 0.0, sum_dy_xhat = 0.0;
                               for (std::int64_t j = 0; j < d; ++j) {
                                   const double xhat = (xg[j] - mean) * rstd;
                                   const double dy = dout[j] * gg[j];
                                   sum_dy += dy;
                                   sum_dy_xhat += dy * xhat;
                               }
                               const double inv_d = 1.0 / static_cast<double>(d);
                               for (std::int64_t j = 0; j < d; ++j) {
                                   const double xhat = (xg[j] - mean) * rstd;
                                   if (px.requires_grad) {
                                       const double dy = dout[j] * gg[j];
                                       px.grad[static_cast<std::size_t>(r * c + h * d + j)] +=
                                           rstd * (dy - inv_d * sum_dy - xhat * inv_d * sum_dy_xhat);
                                   }
                                   if (pg.requires_grad)
                                       pg.grad[static_cast<std::size_t>(h * d + j)] += dout[j] * xhat;
                                   if (pb.requires_grad)
                                       pb.grad[static_cast<std::size_t>(h * d + j)] += dout[j];
                               }
                           }
                       }
                   });
}

}  // namespace

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    return layernorm_impl("layernorm", x, 1, gamma, beta, eps);
}

Tensor head_layernorm(const Tensor& x, int heads, const Tensor& gamma, const Tensor& beta, double eps) {
    if (heads <= 0 || last_dim(x) % heads != 0) {
        throw std::invalid_argument("head_layernorm: channel width " + std::to_string(last_dim(x)) +
                                    " not divisible by " + std::to_string(heads) + " heads");
    }
    return layernorm_impl("head_layernorm", x, heads, gamma, beta, eps);
}

// ---- activations ---------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* name, const Tensor& x, Fwd fwd, Bwd bwd) {
    std::vector<double> out(x.data().size());
    const auto& xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
    return make_op(name, x.shape(), std::move(out), {x}, [bwd](TensorNode& n) {
        TensorNode& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < n.value.size(); ++i)
            p.grad[i] += n.grad[i] * bwd(p.value[i], n.value[i]);
    });
}

double sigmoid_v(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor silu(const Tensor& x) {
    return unary_op(
        "silu", x, [](double v) { return v * sigmoid_v(v); },
        [](double v, double) {
            const double s = sigmoid_v(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        "sigmoid", x, [](double v) { return sigmoid_v(v); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_op(const Tensor& x) {
    return unary_op(
        "tanh", x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_op(const Tensor& x) {
    return unary_op(
        "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor squared_relu(const Tensor& x) {
    return unary_op(
        "squared_relu", x,
        [](double v) {
            const double r = v > 0.0 ? v : 0.0;
            return r * r;
        },
        [](double v, double) { return v > 0.0 ? 2.0 * v : 0.0; });
}

// ---- concat / slice ------------------------------------------------------

Tensor concat_last_axis(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_last_axis: no parts");
    const Shape& s0 = parts[0].shape();
    std::int64_t total_c = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != parts[0].rank()) {
            throw std::invalid_argument("concat_last_axis: rank mismatch");
        }
        for (std::int64_t i = 0; i + 1 < p.rank(); ++i) {
            if (p.dim(i) != s0[static_cast<std::size_t>(i)]) {
                throw std::invalid_argument("concat_last_axis: leading extents differ: " +
                                            shape_str(s0) + " vs " + shape_str(p.shape()));
            }
        }
        total_c += last_dim(p);
    }
    Shape oshape = s0;
    oshape.back() = total_c;
    const std::int64_t rows = shape_numel(oshape) / total_c;
    std::vector<double> out(static_cast<std::size_t>(rows * total_c));
    std::vector<std::int64_t> widths;
    widths.reserve(parts.size());
    std::int64_t off = 0;
    for (const Tensor& p : parts) {
        const std::int64_t c = last_dim(p);
        widths.push_back(c);
        const double* pd = p.data().data();
        for (std::int64_t r = 0; r < rows; ++r) {
            std::memcpy(out.data() + r * total_c + off, pd + r * c,
                        static_cast<std::size_t>(c) * sizeof(double));
        }
        off += c;
    }
    return make_op("concat_last_axis", std::move(oshape), std::move(out), parts,
                   [rows, total_c, widths](TensorNode& n) {
                       std::int64_t off2 = 0;
                       for (std::size_t pi = 0; pi < n.parents.size(); ++pi) {
                           TensorNode& p = *n.parents[pi];
                           const std::int64_t c = widths[pi];
                           if (p.requires_grad) {
                               p.ensure_grad();
                               for (std::int64_t r = 0; r < rows; ++r)
                                   for (std::int64_t j = 0; j < c; ++j)
                                       p.grad[static_cast<std::size_t>(r * c + j)] +=
                                           n.grad[static_cast<std::size_t>(r * total_c + off2 + j)];
                           }
                           off2 += c;
                       }
                   });
}

Tensor slice_last_axis(const Tensor& x, std::int64_t lo, std::int64_t hi) {
    const std::int64_t c = last_dim(x);
    if (lo < 0 || lo >= hi || hi > c) {
        throw std::out_of_range("slice_last_axis: bounds [" + std::to_string(lo) + ", " +
                                std::to_string(hi) + ") invalid for width " + std::to_string(c));
    }
    const std::int64_t w = hi - lo;
    Shape oshape = x.shape();
    oshape.back() = w;
    const std::int64_t rows = x.numel() / c;
    std::vector<double> out(static_cast<std::size_t>(rows * w));
    const double* xd = x.data().data();
    for (std::int64_t r = 0; r < rows; ++r)
        std::memcpy(out.data() + r * w, xd + r * c + lo, static_cast<std::size_t>(w) * sizeof(double));
    return make_op("slice_last_axis", std::move(oshape), std::move(out), {x},
                   [rows, c, lo, w](TensorNode& n) {
                       TensorNode& p = *n.parents[0];
                       if (!p.requires_grad) return;
                       p.ensure_grad();
                       for (std::int64_t r = 0; r < rows; ++r)
                           for (std::int64_t j = 0; j < w; ++j)
                               p.grad[static_cast<std::size_t>(r * c + lo + j)] +=
                                   n.grad[static_cast<std::size_t>(r * w + j)];
                   });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                    shape_str(shape));
    }
    return make_op("reshape", std::move(shape), x.data(), {x}, [](TensorNode& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate_grad(n.grad.data(), n.numel());
    });
}

// ---- reductions ------------------------------------------------------------

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    return make_op("sum", {1}, {acc}, {x}, [](TensorNode& n) {
        TensorNode& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double g = n.grad[0];
        for (double& d : p.grad) d += g;
    });
}

Tensor mean_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    const double inv = 1.0 / static_cast<double>(x.numel());
    return make_op("mean", {1}, {acc * inv}, {x}, [inv](TensorNode& n) {
        TensorNode& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double g = n.grad[0] * inv;
        for (double& d : p.grad) d += g;
    });
}

Tensor mean_rows(const Tensor& x) {
    auto [rows, c] = rows_cols(x);
    std::vector<double> out(static_cast<std::size_t>(c), 0.0);
    const double* xd = x.data().data();
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < c; ++j) out[static_cast<std::size_t>(j)] += xd[r * c + j];
    const double inv = 1.0 / static_cast<double>(rows);
    for (double& v : out) v *= inv;
    return make_op("mean_rows", {c}, std::move(out), {x}, [rows, c, inv](TensorNode& n) {
        TensorNode& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t j = 0; j < c; ++j)
                p.grad[static_cast<std::size_t>(r * c + j)] += n.grad[static_cast<std::size_t>(j)] * inv;
    });
}

Tensor max_rows(const Tensor& x) {
    auto [rows, c] = rows_cols(x);
    std::vector<double> out(static_cast<std::size_t>(c));
    auto arg = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(c), 0);
    const double* xd = x.data().data();
    for (std::int64_t j = 0; j < c; ++j) {
        double best = xd[j];
        std::int64_t bi = 0;
        for (std::int64_t r = 1; r < rows; ++r) {
            if (xd[r * c + j] > best) {
                best = xd[r * c + j];
                bi = r;
            }
        }
        out[static_cast<std::size_t>(j)] = best;
        (*arg)[static_cast<std::size_t>(j)] = bi;
    }
    return make_op("max_rows", {c}, std::move(out), {x}, [c, arg](TensorNode& n) {
        TensorNode& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::int64_t j = 0; j < c; ++j)
            p.grad[static_cast<std::size_t>((*arg)[static_cast<std::size_t>(j)] * c + j)] +=
                n.grad[static_cast<std::size_t>(j)];
    });
}

// ---- broadcast helpers ------------------------------------------------------

Tensor add_bias(const Tensor& x, const Tensor& b) {
    auto [rows, c] = rows_cols(x);
    if (b.numel() != c) {
        throw std::invalid_argument("add_bias: bias width " + shape_str(b.shape()) +
                                    " does not match row width " + std::to_string(c));
    }
    std::vector<double> out(x.data());
    const double* bd = b.data().data();
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < c; ++j) out[static_cast<std::size_t>(r * c + j)] += bd[j];
    return make_op("add_bias", x.shape(), std::move(out), {x, b}, [rows, c](TensorNode& n) {
        TensorNode& px = *n.parents[0];
        TensorNode& pb = *n.parents[1];
        if (px.requires_grad) px.accumulate_grad(n.grad.data(), n.numel());
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t j = 0; j < c; ++j)
                    pb.grad[static_cast<std::size_t>(j)] += n.grad[static_cast<std::size_t>(r * c + j)];
        }
    });
}

Tensor scale_cols(const Tensor& x, const Tensor& v) {
    auto [rows, c] = rows_cols(x);
    if (v.numel() != c) {
        throw std::invalid_argument("scale_cols: vector width " + shape_str(v.shape()) +
                                    " does not match row width " + std::to_string(c));
    }
    std::vector<double> out(x.data());
    const double* vd = v.data().data();
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t j = 0; j < c; ++j) out[static_cast<std::size_t>(r * c + j)] *= vd[j];
    return make_op("scale_cols", x.shape(), std::move(out), {x, v}, [rows, c](TensorNode& n) {
        TensorNode& px = *n.parents[0];
        TensorNode& pv = *n.parents[1];
        if (px.requires_grad) {
            px.ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t j = 0; j < c; ++j)
                    px.grad[static_cast<std::size_t>(r * c + j)] +=
                        n.grad[static_cast<std::size_t>(r * c + j)] * pv.value[static_cast<std::size_t>(j)];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t j = 0; j < c; ++j)
                    pv.grad[static_cast<std::size_t>(j)] +=
                        n.grad[static_cast<std::size_t>(r * c + j)] * px.value[static_cast<std::size_t>(r * c + j)];
        }
    });
}

// ---- gather / segment ops ----------------------------------------------------

Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& idx) {
    if (x.rank() != 2) throw std::invalid_argument("gather_rows: expected rank-2 input");
    const std::int64_t rows = x.dim(0), c = x.dim(1);
    const std::int64_t m = static_cast<std::int64_t>(idx.size());
    std::vector<double> out(static_cast<std::size_t>(m * c), 0.0);
    const double* xd = x.data().data();
    for (std::int64_t i = 0; i < m; ++i) {
        const std::int64_t r = idx[static_cast<std::size_t>(i)];
        if (r == -1) continue;
        if (r < 0 || r >= rows)
            throw std::out_of_range("gather_rows: index " + std::to_string(r) + " out of range [0, " +
                                    std::to_string(rows) + ")");
        std::memcpy(out.data() + i * c, xd + r * c, static_cast<std::size_t>(c) * sizeof(double));
    }
    auto ids = std::make_shared<std::vector<std::int64_t>>(idx);
    return make_op("gather_rows", {m, c}, std::move(out), {x}, [c, m, ids](TensorNode& n) {
        TensorNode& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::int64_t i = 0; i < m; ++i) {
            const std::int64_t r = (*ids)[static_cast<std::size_t>(i)];
            if (r == -1) continue;
            for (std::int64_t j = 0; j < c; ++j)
                p.grad[static_cast<std::size_t>(r * c + j)] += n.grad[static_cast<std::size_t>(i * c + j)];
        }
    });
}

Tensor segment_max(const Tensor& x, const std::vector<std::int64_t>& seg, std::int64_t nseg) {
    if (x.rank() != 2) throw std::invalid_argument("segment_max: expected rank-2 input");
    const std::int64_t rows = x.dim(0), c = x.dim(1);
    if (static_cast<std::int64_t>(seg.size()) != rows)
        throw std::invalid_argument("segment_max: segment ids must cover every row");
    std::vector<double> out(static_cast<std::size_t>(nseg * c), 0.0);
    auto arg = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(nseg * c), -1);
    const double* xd = x.data().data();
    for (std::int64_t i = 0; i < rows; ++i) {
        const std::int64_t s = seg[static_cast<std::size_t>(i)];
        if (s < 0 || s >= nseg) throw std::out_of_range("segment_max: bad segment id " + std::to_string(s));
        for (std::int64_t j = 0; j < c; ++j) {
            const std::size_t o = static_cast<std::size_t>(s * c + j);
            if ((*arg)[o] == -1 || xd[i * c + j] > out[o]) {
                out[o] = xd[i * c + j];
                (*arg)[o] = i;
            }
        }
    }
    for (std::size_t o = 0; o < out.size(); ++o) {
        if ((*arg)[o] == -1) out[o] = 0.0;  // empty segment
    }
    return make_op("segment_max", {nseg, c}, std::move(out), {x}, [nseg, c, arg](TensorNode& n) {
        TensorNode& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::int64_t s = 0; s < nseg; ++s)
            for (std::int64_t j = 0; j < c; ++j) {
                const std::int64_t i = (*arg)[static_cast<std::size_t>(s * c + j)];
                if (i == -1) continue;
                p.grad[static_cast<std::size_t>(i * c + j)] += n.grad[static_cast<std::size_t>(s * c + j)];
            }
    });
}

Tensor segment_mean(const Tensor& x, const std::vector<std::int64_t>& seg, std::int64_t nseg) {
    if (x.rank() != 2) throw std::invalid_argument("segment_mean: expected rank-2 input");
    const std::int64_t rows = x.dim(0), c = x.dim(1);
    if (static_cast<std::int64_t>(seg.size()) != rows)
        throw std::invalid_argument("segment_mean: segment ids must cover every row");
    std::vector<double> out(static_cast<std::size_t>(nseg * c), 0.0);
    auto counts = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(nseg), 0);
    const double* xd = x.data().data();
    for (std::int64_t i = 0; i < rows; ++i) {
        const std::int64_t s = seg[static_cast<std::size_t>(i)];
        if (s < 0 || s >= nseg) throw std::out_of_range("segment_mean: bad segment id " + std::to_string(s));
        ++(*counts)[static_cast<std::size_t>(s)];
        for (std::int64_t j = 0; j < c; ++j) out[static_cast<std::size_t>(s * c + j)] += xd[i * c + j];
    }
    for (std::int64_t s = 0; s < nseg; ++s) {
        const std::int64_t cnt = (*counts)[static_cast<std::size_t>(s)];
        if (cnt == 0) continue;
        for (std::int64_t j = 0; j < c; ++j) out[static_cast<std::size_t>(s * c + j)] /= static_cast<double>(cnt);
    }
    auto ids = std::make_shared<std::vector<std::int64_t>>(seg);
    return make_op("segment_mean", {nseg, c}, std::move(out), {x}, [c, ids, counts](TensorNode& n) {
        TensorNode& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const std::int64_t rows2 = static_cast<std::int64_t>(ids->size());
        for (std::int64_t i = 0; i < rows2; ++i) {
            const std::int64_t s = (*ids)[static_cast<std::size_t>(i)];
            const double inv = 1.0 / static_cast<double>((*counts)[static_cast<std::size_t>(s)]);
            for (std::int64_t j = 0; j < c; ++j)
                p.grad[static_cast<std::size_t>(i * c + j)] +=
                    n.grad[static_cast<std::size_t>(s * c + j)] * inv;
        }
    });
}

// ---- losses ---------------------------------------------------------------

Tensor softmax_cross_entropy(const Tensor& logits, int label) {
    const std::int64_t k = logits.numel();
    if (label < 0 || label >= k)
        throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                    " out of range for " + std::to_string(k) + " classes");
    const double* ld = logits.data().data();
    double mx = ld[0];
    for (std::int64_t i = 1; i < k; ++i) mx = std::max(mx, ld[i]);
    auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(k));
    double z = 0.0;
    for (std::int64_t i = 0; i < k; ++i) {
        (*probs)[static_cast<std::size_t>(i)] = std::exp(ld[i] - mx);
        z += (*probs)[static_cast<std::size_t>(i)];
    }
    for (double& p : *probs) p /= z;
    const double loss = -std::log((*probs)[static_cast<std::size_t>(label)]);
    return make_op("softmax_cross_entropy", {1}, {loss}, {logits}, [probs, label, k](TensorNode& n) {
        TensorNode& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double g = n.grad[0];
        for (std::int64_t i = 0; i < k; ++i) {
            double d = (*probs)[static_cast<std::size_t>(i)];
            if (i == label) d -= 1.0;
            p.grad[static_cast<std::size_t>(i)] += g * d;
        }
    });
}

Tensor chamfer_loss(const Tensor& pred, const Tensor& target) {
    if (pred.rank() != 2 || pred.dim(1) != 3 || target.rank() != 2 || target.dim(1) != 3)
        throw std::invalid_argument("chamfer_loss: expected [k x 3] point sets");
    const std::int64_t np = pred.dim(0), nt = target.dim(0);
    if (np == 0 || nt == 0) throw std::invalid_argument("chamfer_loss: empty point set");
    const double* pd = pred.data().data();
    const double* td = target.data().data();
    auto nn_pt = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(np));
    auto nn_tp = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(nt));
    auto sq = [](const double* a, const double* b) {
        const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
        return dx * dx + dy * dy + dz * dz;
    };
    double acc_p = 0.0;
    for (std::int64_t i = 0; i < np; ++i) {
        double best = sq(pd + i * 3, td);
        std::int64_t bi = 0;
        for (std::int64_t j = 1; j < nt; ++j) {
            const double d = sq(pd + i * 3, td + j * 3);
            if (d < best) {
                best = d;
                bi = j;
            }
        }
        (*nn_pt)[static_cast<std::size_t>(i)] = bi;
        acc_p += best;
    }
    double acc_t = 0.0;
    for (std::int64_t j = 0; j < nt; ++j) {
        double best = sq(td + j * 3, pd);
        std::int64_t bi = 0;
        for (std::int64_t i = 1; i < np; ++i) {
            const double d = sq(td + j * 3, pd + i * 3);
            if (d < best) {
                best = d;
                bi = i;
            }
        }
        (*nn_tp)[static_cast<std::size_t>(j)] = bi;
        acc_t += best;
    }
    const double loss = acc_p / static_cast<double>(np) + acc_t / static_cast<double>(nt);
    return make_op("chamfer_loss", {1}, {loss}, {pred, target},
                   [np, nt, nn_pt, nn_tp](TensorNode& n) {
                       TensorNode& p = *n.parents[0];
                       TensorNode& t = *n.parents[1];
                       if (!p.requires_grad) return;
                       p.ensure_grad();
                       const double g = n.grad[0];
                       const double wp = 2.0 * g / static_cast<double>(np);
                       const double wt = 2.0 * g / static_cast<double>(nt);
                       for (std::int64_t i = 0; i < np; ++i) {
                           const std::int64_t j = (*nn_pt)[static_cast<std::size_t>(i)];
                           for (int a = 0; a < 3; ++a)
                               p.grad[static_cast<std::size_t>(i * 3 + a)] +=
                                   wp * (p.value[static_cast<std::size_t>(i * 3 + a)] -
                                         t.value[static_cast<std::size_t>(j * 3 + a)]);
                       }
                       for (std::int64_t j = 0; j < nt; ++j) {
                           const std::int64_t i = (*nn_tp)[static_cast<std::size_t>(j)];
                           for (int a = 0; a < 3; ++a)
                               p.grad[static_cast<std::size_t>(i * 3 + a)] +=
                                   wt * (p.value[static_cast<std::size_t>(i * 3 + a)] -
                                         t.value[static_cast<std::size_t>(j * 3 + a)]);
                       }
                   });
}

// ---- finite differences ------------------------------------------------------

double rel_err(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

double fd_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h) {
    x.set_requires_grad(true);
    x.zero_grad();
    tape().clear();
    Tensor loss = f(x);
    backward(loss);
    std::vector<double> analytic = x.grad();
    tape().clear();
    double worst = 0.0;
    {
        NoGradGuard ng;
        auto& xd = x.mutable_data();
        for (std::size_t i = 0; i < xd.size(); ++i) {
            const double orig = xd[i];
            xd[i] = orig + h;
            const double fp = f(x).item();
            xd[i] = orig - h;
            const double fm = f(x).item();
            xd[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            worst = std::max(worst, rel_err(analytic[i], fd));
        }
    }
    x.set_requires_grad(false);
    return worst;
}

FdReport fd_check_params(const std::function<Tensor()>& loss_fn,
                         const std::vector<std::pair<std::string, Tensor>>& params, double h) {
    for (auto& [name, p] : params) {
        Tensor t = p;
        t.zero_grad();
    }
    tape().clear();
    Tensor loss = loss_fn();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& [name, p] : params) analytic.push_back(p.grad());
    tape().clear();
    FdReport rep;
    NoGradGuard ng;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi].second;
        auto& pdata = p.mutable_data();
        for (std::size_t i = 0; i < pdata.size(); ++i) {
            const double orig = pdata[i];
            pdata[i] = orig + h;
            const double fp = loss_fn().item();
            pdata[i] = orig - h;
            const double fm = loss_fn().item();
            pdata[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double err = rel_err(analytic[pi][i], fd);
            if (err > rep.max_err) {
                rep.max_err = err;
                rep.worst_param = params[pi].first + "[" + std::to_string(i) + "]";
            }
        }
    }
    return rep;
}

}  // namespace prwkv
