#include "ean/compute.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ean {

namespace {

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << t.rows() << "x" << t.cols();
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

void require_finite(const Tensor& t, const char* op) {
  if (!t.allFinite()) throw NumericError(std::string(op) + ": non-finite value");
}

Tape& tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw std::logic_error("operands live on different tapes");
  return *a.tape;
}

}  // namespace

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(base) ^ a) ^ b);
}

// ---------------------------------------------------------------------------
// ParameterSet

Parameter& ParameterSet::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Parameter p;
  p.grad = Tensor::Zero(value.rows(), value.cols());
  p.value = std::move(value);
  entries_.emplace_back(name, std::move(p));
  return entries_.back().second;
}

Parameter& ParameterSet::at(const std::string& name) {
  for (auto& [n, p] : entries_) {
    if (n == name) return p;
  }
  throw std::out_of_range("unknown parameter: " + name);
}

const Parameter& ParameterSet::at(const std::string& name) const {
  for (const auto& [n, p] : entries_) {
    if (n == name) return p;
  }
  throw std::out_of_range("unknown parameter: " + name);
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

void ParameterSet::zero_grad() {
  for (auto& [n, p] : entries_) p.grad.setZero();
}

std::size_t ParameterSet::coordinate_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : entries_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

Tensor uniform_init(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) t(i, j) = dist(rng);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const {
  if (tape == nullptr) throw std::logic_error("unbound Var");
  return tape->value(id);
}

double Var::scalar() const {
  const Tensor& v = value();
  if (v.size() != 1) throw ShapeError("scalar(): node is " + shape_str(v));
  return v(0, 0);
}

Var Tape::push(Tensor value, std::vector<int> parents, Backprop backprop) {
  require_finite(value, "forward");
  nodes_.push_back(Node{std::move(value), Tensor(), std::move(parents), std::move(backprop), nullptr});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor value) { return push(std::move(value), {}, nullptr); }

Var Tape::scalar(double value) { return constant(Tensor::Constant(1, 1, value)); }

Var Tape::param(Parameter& p) {
  Var v = push(p.value, {}, nullptr);
  nodes_.back().param = &p;
  return v;
}

void Tape::accumulate(int id, const Tensor& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (loss.tape != this || loss.id < 0 || nodes_.empty()) {
    throw std::logic_error("backward() called without a recorded forward pass");
  }
  if (consumed_) throw std::logic_error("backward() called twice on the same tape");
  const Tensor& lv = nodes_[static_cast<std::size_t>(loss.id)].value;
  if (lv.size() != 1) throw ShapeError("backward(): loss must be scalar, got " + shape_str(lv));
  consumed_ = true;

  nodes_[static_cast<std::size_t>(loss.id)].grad = Tensor::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0) continue;
    require_finite(n.grad, "backward");
    if (n.param != nullptr) {
      if (!n.param->frozen) n.param->grad += n.grad;
    } else if (n.backprop) {
      n.backprop(*this, n.grad);
    }
  }
}

bool Tape::reaches(Var v, const ParameterSet& params) const {
  if (v.tape != this) return false;
  std::vector<const Parameter*> targets;
  for (const auto& [name, p] : params) targets.push_back(&p);
  std::vector<char> seen(nodes_.size(), 0);
  std::vector<int> stack{v.id};
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    if (seen[static_cast<std::size_t>(i)]) continue;
    seen[static_cast<std::size_t>(i)] = 1;
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.param != nullptr && std::find(targets.begin(), targets.end(), n.param) != targets.end()) return true;
    for (int parent : n.parents) stack.push_back(parent);
  }
  return false;
}

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(av) + " * " + shape_str(bv));
  }
  const int ia = a.id, ib = b.id;
  return t.push(av * bv, {ia, ib}, [ia, ib](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g * tp.value(ib).transpose());
    tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  const int ia = a.id, ib = b.id;
  return t.push(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  const int ia = a.id, ib = b.id;
  return t.push(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, -g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  const int ia = a.id, ib = b.id;
  return t.push(a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
    tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
  });
}

Var sigmoid(Var a) {
  const int ia = a.id;
  Tensor out = a.value().unaryExpr([](double x) { return sigmoid(x); });
  Tensor deriv = out.cwiseProduct((1.0 - out.array()).matrix());
  return a.tape->push(std::move(out), {ia}, [ia, deriv = std::move(deriv)](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g.cwiseProduct(deriv));
  });
}

Var tanh(Var a) {
  const int ia = a.id;
  Tensor out = a.value().array().tanh().matrix();
  Tensor deriv = (1.0 - out.array().square()).matrix();
  return a.tape->push(std::move(out), {ia}, [ia, deriv = std::move(deriv)](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g.cwiseProduct(deriv));
  });
}

Var sum(Var a) {
  const int ia = a.id;
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape->push(Tensor::Constant(1, 1, a.value().sum()), {ia}, [ia, r, c](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, Tensor::Constant(r, c, g(0, 0)));
  });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var scale(Var a, double s) {
  const int ia = a.id;
  return a.tape->push(a.value() * s, {ia}, [ia, s](Tape& tp, const Tensor& g) { tp.accumulate(ia, g * s); });
}

Var one_minus(Var a) {
  const int ia = a.id;
  return a.tape->push((1.0 - a.value().array()).matrix(), {ia},
                      [ia](Tape& tp, const Tensor& g) { tp.accumulate(ia, -g); });
}

Var squared_error(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "squared_error");
  const int ia = a.id, ib = b.id;
  Tensor diff = a.value() - b.value();
  Tensor out = diff.array().square().matrix();
  return t.push(std::move(out), {ia, ib}, [ia, ib, diff = std::move(diff)](Tape& tp, const Tensor& g) {
    Tensor d = 2.0 * g.cwiseProduct(diff);
    tp.accumulate(ia, d);
    tp.accumulate(ib, -d);
  });
}

Var squared_difference(Var a, Var b) { return sum(squared_error(a, b)); }

Var add_row(Var m, Var row) {
  Tape& t = tape_of(m, row);
  const Tensor& mv = m.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != mv.cols()) {
    throw ShapeError("add_row: expected 1x" + std::to_string(mv.cols()) + " row, got " + shape_str(rv));
  }
  const int im = m.id, ir = row.id;
  Tensor out = mv.rowwise() + rv.row(0);
  return t.push(std::move(out), {im, ir}, [im, ir](Tape& tp, const Tensor& g) {
    tp.accumulate(im, g);
    tp.accumulate(ir, g.colwise().sum());
  });
}

Var mul_const(Var a, const Tensor& c) {
  require_same_shape(a.value(), c, "mul_const");
  const int ia = a.id;
  return a.tape->push(a.value().cwiseProduct(c), {ia},
                      [ia, c](Tape& tp, const Tensor& g) { tp.accumulate(ia, g.cwiseProduct(c)); });
}

Var blend(const Vector& gate, Var on, Var off) {
  Tape& t = tape_of(on, off);
  require_same_shape(on.value(), off.value(), "blend");
  if (gate.size() != on.rows()) {
    throw ShapeError("blend: gate has " + std::to_string(gate.size()) + " rows, operands have " +
                     std::to_string(on.rows()));
  }
  const int ion = on.id, ioff = off.id;
  const Vector keep = (1.0 - gate.array()).matrix();
  Tensor out = gate.asDiagonal() * on.value() + keep.asDiagonal() * off.value();
  return t.push(std::move(out), {ion, ioff}, [ion, ioff, gate, keep](Tape& tp, const Tensor& g) {
    tp.accumulate(ion, gate.asDiagonal() * g);
    tp.accumulate(ioff, keep.asDiagonal() * g);
  });
}

Var clamped_log(Var a, double lo, double hi) {
  const int ia = a.id;
  const Tensor& av = a.value();
  Tensor clamped = av.cwiseMax(lo).cwiseMin(hi);
  Tensor deriv(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.size(); ++i) {
    const double x = av.data()[i];
    deriv.data()[i] = (x < lo || x > hi) ? 0.0 : 1.0 / clamped.data()[i];
  }
  return a.tape->push(clamped.array().log().matrix(), {ia}, [ia, deriv = std::move(deriv)](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g.cwiseProduct(deriv));
  });
}

Var hstack(const std::vector<Var>& columns) {
  if (columns.empty()) throw ShapeError("hstack: no columns");
  Tape& t = *columns.front().tape;
  const Eigen::Index rows = columns.front().rows();
  Tensor out(rows, static_cast<Eigen::Index>(columns.size()));
  std::vector<int> ids;
  ids.reserve(columns.size());
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const Tensor& cv = columns[k].value();
    if (columns[k].tape != &t) throw std::logic_error("hstack: operands live on different tapes");
    if (cv.rows() != rows || cv.cols() != 1) throw ShapeError("hstack: column " + std::to_string(k) + " is " + shape_str(cv));
    out.col(static_cast<Eigen::Index>(k)) = cv.col(0);
    ids.push_back(columns[k].id);
  }
  std::vector<int> parents = ids;
  return t.push(std::move(out), std::move(parents), [ids](Tape& tp, const Tensor& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) tp.accumulate(ids[k], g.col(static_cast<Eigen::Index>(k)));
  });
}

Var concat(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) throw ShapeError("concat: row mismatch " + shape_str(av) + " | " + shape_str(bv));
  Tensor out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  const int ia = a.id, ib = b.id;
  const Eigen::Index ca = av.cols(), cb = bv.cols();
  return t.push(std::move(out), {ia, ib}, [ia, ib, ca, cb](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g.leftCols(ca));
    tp.accumulate(ib, g.rightCols(cb));
  });
}

Var row_sum(Var a) {
  const int ia = a.id;
  const Eigen::Index c = a.cols();
  return a.tape->push(a.value().rowwise().sum(), {ia}, [ia, c](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g.replicate(1, c));
  });
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::for_params(const ParameterSet& params, double alpha) {
  AdamState s;
  s.alpha = alpha;
  for (const auto& [name, p] : params) {
    s.moments.emplace_back(name, std::make_pair(Tensor::Zero(p.value.rows(), p.value.cols()),
                                                Tensor::Zero(p.value.rows(), p.value.cols())));
  }
  return s;
}

void adam_step(ParameterSet& params, AdamState& state) {
  if (!state.initialized() || state.moments.size() != params.size()) {
    throw std::logic_error("adam_step: optimizer state not initialised for this parameter set");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, mv] : state.moments) {
    Parameter& p = params.at(name);
    auto& [m, v] = mv;
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      throw ShapeError("adam_step: moment shape mismatch for " + name);
    }
    if (p.frozen) continue;
    require_finite(p.grad, "adam_step");
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseAbs2();
    const auto m_hat = m.array() / c1;
    const auto v_hat = v.array() / c2;
    p.value.array() -= state.alpha * m_hat / (v_hat.sqrt() + state.epsilon);
  }
  params.zero_grad();
}

// ---------------------------------------------------------------------------
// Finite differences

GradCheckResult finite_difference_check(const std::function<double(ParameterSet&, bool)>& loss_and_grad,
                                        ParameterSet& params, double epsilon, std::size_t min_coordinates,
                                        std::uint64_t seed) {
  if (!(epsilon > 0)) throw std::invalid_argument("finite_difference_check: epsilon must be positive");

  params.zero_grad();
  const double base = loss_and_grad(params, true);
  const double again = loss_and_grad(params, false);
  if (base != again) throw std::logic_error("finite_difference_check: loss is not deterministic");

  struct Coord {
    Parameter* p;
    const std::string* name;
    Eigen::Index index;
  };
  std::vector<Coord> coords;
  for (auto& [name, p] : params) {
    if (p.frozen) continue;
    for (Eigen::Index i = 0; i < p.value.size(); ++i) coords.push_back({&p, &name, i});
  }
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  if (coords.size() > min_coordinates) coords.resize(min_coordinates);

  GradCheckResult result;
  result.coordinates_checked = coords.size();
  for (const Coord& c : coords) {
    double& x = c.p->value.data()[c.index];
    const double saved = x;
    x = saved + epsilon;
    const double up = loss_and_grad(params, false);
    x = saved - epsilon;
    const double down = loss_and_grad(params, false);
    x = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double analytic = c.p->grad.data()[c.index];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    const double rel = std::abs(numeric - analytic) / denom;
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_parameter = *c.name;
    }
  }
  params.zero_grad();
  return result;
}

// ---------------------------------------------------------------------------
// GRU cell

void GruCell::init(ParameterSet& params, std::mt19937_64& rng) const {
  const double in_scale = std::sqrt(3.0 / static_cast<double>(input_dim_));
  const double h_scale = std::sqrt(3.0 / static_cast<double>(hidden_dim_));
  for (const char* gate : {"r", "u", "c"}) {
    params.add(prefix_ + ".W" + gate, uniform_init(input_dim_, hidden_dim_, in_scale, rng));
    params.add(prefix_ + ".U" + gate, uniform_init(hidden_dim_, hidden_dim_, h_scale, rng));
  }
}

void GruCell::bind(Tape& tape, ParameterSet& params) {
  wr_ = tape.param(params.at(prefix_ + ".Wr"));
  ur_ = tape.param(params.at(prefix_ + ".Ur"));
  wu_ = tape.param(params.at(prefix_ + ".Wu"));
  uu_ = tape.param(params.at(prefix_ + ".Uu"));
  wc_ = tape.param(params.at(prefix_ + ".Wc"));
  uc_ = tape.param(params.at(prefix_ + ".Uc"));
}

Var GruCell::step(Var h_prev, Var input) const {
  if (input.cols() != input_dim_ || h_prev.cols() != hidden_dim_ || input.rows() != h_prev.rows()) {
    throw ShapeError("GruCell::step: expected Nx" + std::to_string(input_dim_) + " input and Nx" +
                     std::to_string(hidden_dim_) + " state");
  }
  Var r = sigmoid(add(matmul(input, wr_), matmul(h_prev, ur_)));
  Var u = sigmoid(add(matmul(input, wu_), matmul(h_prev, uu_)));
  Var c = tanh(add(matmul(input, wc_), matmul(mul(r, h_prev), uc_)));
  // h' = h + u * (c - h)
  return add(h_prev, mul(u, sub(c, h_prev)));
}

}  // namespace ean
