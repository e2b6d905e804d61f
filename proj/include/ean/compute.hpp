#pragma once

// Minimal reverse-mode differentiation over dense Eigen matrices.
//
// Every value on a Tape is a 2-D matrix (scalars are 1x1). Nodes are appended
// in evaluation order, so a reverse sweep over the node list is a valid
// topological order for backpropagation.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ean {

using Tensor = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when a NaN or Inf shows up in a forward value or gradient.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// splitmix64-based stream derivation: independent seeds per (base, a, b).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
Scalar logit(Scalar p) {
  return std::log(p / (Scalar(1) - p));
}

// ---------------------------------------------------------------------------
// Parameters

struct Parameter {
  Tensor value;
  Tensor grad;
  bool frozen = false;
};

/// Named, insertion-ordered collection of parameters with gradient buffers.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Tensor value);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  void zero_grad();
  std::size_t size() const { return entries_.size(); }
  std::size_t coordinate_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<std::pair<std::string, Parameter>> entries_;
};

/// Uniform(-scale, scale) initialisation used for all weight matrices.
Tensor uniform_init(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Tape

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var scalar(double value);
  /// Leaf bound to a parameter; backward() accumulates into its grad buffer
  /// unless the parameter is frozen.
  Var param(Parameter& p);

  /// Reverse sweep from a 1x1 loss node.
  void backward(Var loss);

  /// True when `v` depends on at least one leaf bound to `params`.
  bool reaches(Var v, const ParameterSet& params) const;

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  std::size_t size() const { return nodes_.size(); }

  using Backprop = std::function<void(Tape&, const Tensor& grad_out)>;
  Var push(Tensor value, std::vector<int> parents, Backprop backprop);
  /// Adds `g` into the gradient slot of node `id`.
  void accumulate(int id, const Tensor& g);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    Backprop backprop;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Forward primitives. All shape mismatches throw ShapeError.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var sigmoid(Var a);
Var tanh(Var a);
Var sum(Var a);
Var mean(Var a);
Var scale(Var a, double s);
Var one_minus(Var a);
/// sum((a - b)^2) as a 1x1 node.
Var squared_difference(Var a, Var b);
/// Elementwise (a - b)^2, same shape as the inputs.
Var squared_error(Var a, Var b);
/// Adds a 1xC row to every row of an RxC matrix.
Var add_row(Var m, Var row);
/// Elementwise product with a constant of the same shape.
Var mul_const(Var a, const Tensor& c);
/// gate * on + (1 - gate) * off, where gate is a constant Rx1 column applied
/// across all columns.
Var blend(const Vector& gate, Var on, Var off);
/// log(clamp(a, lo, hi)); zero gradient where the clamp is active.
Var clamped_log(Var a, double lo, double hi);
/// Column-stack Rx1 nodes into an RxK matrix.
Var hstack(const std::vector<Var>& columns);
/// Horizontal concatenation of two matrices with equal row counts.
Var concat(Var a, Var b);
/// Row-wise sum: RxC -> Rx1.
Var row_sum(Var a);

// ---------------------------------------------------------------------------
// Optimisation

struct AdamState {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<std::pair<std::string, std::pair<Tensor, Tensor>>> moments;

  bool initialized() const { return !moments.empty(); }
  /// Allocates zeroed first/second moments mirroring `params`.
  static AdamState for_params(const ParameterSet& params, double alpha = 0.001);
};

/// One bias-corrected Adam update of every non-frozen parameter, then zeroes
/// all gradients.
void adam_step(ParameterSet& params, AdamState& state);

// ---------------------------------------------------------------------------
// Gradient verification

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::string worst_parameter;
};

/// `loss_and_grad` must compute the loss for the current parameter values and,
/// when asked (second argument true), accumulate analytic gradients into the
/// parameter grad buffers. Central differences are taken on a random subsample
/// of at least `min_coordinates` coordinates (or all of them if fewer exist).
GradCheckResult finite_difference_check(
    const std::function<double(ParameterSet&, bool)>& loss_and_grad, ParameterSet& params,
    double epsilon = 1e-5, std::size_t min_coordinates = 200, std::uint64_t seed = 7);

// ---------------------------------------------------------------------------
// Recurrent cell

/// Gated recurrent cell with no additive bias anywhere:
///   r = sigma(E Wr + H Ur), u = sigma(E Wu + H Uu)
///   c = tanh(E Wc + (r*H) Uc), h' = (1-u)*H + u*c
/// With H = 0 and E = 0 this emits exactly zero.
class GruCell {
 public:
  GruCell() = default;
  GruCell(std::string prefix, Eigen::Index input_dim, Eigen::Index hidden_dim)
      : prefix_(std::move(prefix)), input_dim_(input_dim), hidden_dim_(hidden_dim) {}

  void init(ParameterSet& params, std::mt19937_64& rng) const;
  /// Binds the cell's weights on `tape`; call once per tape before step().
  void bind(Tape& tape, ParameterSet& params);
  Var step(Var h_prev, Var input) const;

  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index hidden_dim() const { return hidden_dim_; }
  const std::string& prefix() const { return prefix_; }

 private:
  std::string prefix_;
  Eigen::Index input_dim_ = 0;
  Eigen::Index hidden_dim_ = 0;
  Var wr_, ur_, wu_, uu_, wc_, uc_;
};

}  // namespace ean
