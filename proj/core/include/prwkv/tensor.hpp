#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace prwkv {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

// Storage is always 64-bit IEEE-754. In f32 mode every op output is rounded
// to float precision, so all stored values are exactly representable floats.
enum class Precision { f64, f32 };
void set_compute_precision(Precision p);
Precision compute_precision();

// Thread-local switch; when off, ops neither record onto the tape nor
// propagate requires_grad, which makes inference over shared parameters
// safe from many threads.
bool grad_enabled();
void set_grad_enabled(bool on);
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily, same length as value
    bool requires_grad = false;
    bool is_leaf = true;

    const char* op = "leaf";
    std::vector<NodePtr> parents;
    std::function<void(TensorNode&)> backward_fn;
    std::uint64_t tape_gen = 0;
    std::int64_t tape_pos = -1;

    std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
    void ensure_grad();
    void accumulate_grad(const double* g, std::int64_t n);
};

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t rank() const { return static_cast<std::int64_t>(node_->shape.size()); }
    std::int64_t dim(std::int64_t i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return node_->numel(); }

    const std::vector<double>& data() const { return node_->value; }
    std::vector<double>& mutable_data() { return node_->value; }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on);
    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const;
    std::vector<double>& mutable_grad();
    void zero_grad();

    TensorNode* node() const { return node_.get(); }
    const NodePtr& node_ptr() const { return node_; }

  private:
    NodePtr node_;
};

// Execution-ordered record of op nodes; backward walks it in reverse from
// the loss, visiting each reachable node exactly once.
struct ComputationRecord {
    std::vector<NodePtr> nodes;
    std::uint64_t generation = 1;

    void clear();
    std::size_t size() const { return nodes.size(); }
};

ComputationRecord& tape();  // thread-local

// First node on the current tape holding a NaN/Inf, in execution order;
// nullptr when everything is finite.
const TensorNode* first_nonfinite_on_tape();

// Accumulates d(loss)/d(t) into the grad of every tracked ancestor of loss.
// Repeated calls accumulate until grads are zeroed.
void backward(const Tensor& loss);

// Registers a custom differentiable op; backward_fn pulls node.grad and
// accumulates into the parents' grads.
Tensor make_custom_op(const char* op, Shape shape, std::vector<double> value,
                      std::vector<Tensor> inputs, std::function<void(TensorNode&)> backward_fn);

// ---- ops -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

Tensor matmul(const Tensor& a, const Tensor& b);

// Population variance over the last axis.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// Normalizes each head's span of the last axis independently; gamma/beta
// still cover the full channel width.
Tensor head_layernorm(const Tensor& x, int heads, const Tensor& gamma, const Tensor& beta,
                      double eps = 1e-5);

Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor exp_op(const Tensor& x);
Tensor squared_relu(const Tensor& x);

Tensor concat_last_axis(const std::vector<Tensor>& parts);
Tensor slice_last_axis(const Tensor& x, std::int64_t lo, std::int64_t hi);
Tensor reshape(const Tensor& x, Shape shape);  // same element count

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mean_rows(const Tensor& x);  // [N x C] -> [C]
Tensor max_rows(const Tensor& x);   // [N x C] -> [C], ties to the smaller row

Tensor add_bias(const Tensor& x, const Tensor& b);    // rows of x plus b
Tensor scale_cols(const Tensor& x, const Tensor& v);  // rows of x times v

// Row gather; index -1 yields a zero row and receives no gradient.
Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& idx);
// Columnwise max over rows sharing a segment id; empty segments yield zero.
Tensor segment_max(const Tensor& x, const std::vector<std::int64_t>& seg, std::int64_t nseg);
Tensor segment_mean(const Tensor& x, const std::vector<std::int64_t>& seg, std::int64_t nseg);

Tensor softmax_cross_entropy(const Tensor& logits, int label);

// Symmetric mean of nearest-neighbor squared distances; gradient flows to
// pred only.
Tensor chamfer_loss(const Tensor& pred, const Tensor& target);

// ---- finite-difference checking ---------------------------------------

// |a-b| / max(|a|, |b|, floor)
double rel_err(double a, double b, double floor = 1e-3);

// Central differences over every coordinate of x against backward();
// returns the max relative error. f must be deterministic and scalar-valued.
double fd_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h = 1e-5);

// Same, over every coordinate of every listed parameter of a closed loss.
struct FdReport {
    double max_err = 0.0;
    std::string worst_param;
};
FdReport fd_check_params(const std::function<Tensor()>& loss_fn,
                         const std::vector<std::pair<std::string, Tensor>>& params,
                         double h = 1e-5);

}  // namespace prwkv
