#include "bthick/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bthick/errors.hpp"

namespace bthick {

namespace {

void validate_specs(const std::vector<LayerSpec>& specs) {
  require(!specs.empty(), "MlpModel: at least one layer required");
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto& s = specs[k];
    const std::string where = "MlpModel: layer " + std::to_string(k);
    require(s.in_dim > 0 && s.out_dim > 0, where + " has a zero dimension");
    require(!s.residual || s.in_dim == s.out_dim, where + " is residual but in_dim != out_dim");
    if (k > 0)
      require(specs[k - 1].out_dim == s.in_dim, where + " input does not match previous output");
  }
  require(specs.back().out_dim >= 2, "MlpModel: need at least two classes");
}

// Per-layer values kept for the backward pass.
struct Tape {
  std::vector<Matrix> inputs;  // input of layer k
  std::vector<Matrix> pre;     // W x + b of layer k
  Matrix logits;
};

Tape run_forward(const MlpModel& model, const Matrix& x) {
  require(x.cols() == model.input_dim(), "forward: input has " + std::to_string(x.cols()) +
                                             " columns, model expects " +
                                             std::to_string(model.input_dim()));
  Tape tape;
  tape.inputs.reserve(model.num_layers());
  tape.pre.reserve(model.num_layers());
  Matrix h = x;
  for (const Layer& layer : model.layers()) {
    Matrix pre = matmul_bt(h, layer.weights);
    for (std::size_t r = 0; r < pre.rows(); ++r) {
      auto row = pre.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias[c];
    }
    Matrix out = pre;
    if (layer.spec.activation == Activation::kRelu)
      for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    if (layer.spec.residual) {
      auto o = out.values();
      auto in = h.values();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += in[i];
    }
    tape.inputs.push_back(std::move(h));
    tape.pre.push_back(std::move(pre));
    h = std::move(out);
  }
  tape.logits = std::move(h);
  return tape;
}

// Propagates dL/dlogits back through the tape. Fills parameter gradients
// when `grads` is non-null and returns dL/dx.
Matrix run_backward(const MlpModel& model, const Tape& tape, Matrix d_out, ParamGrads* grads) {
  const auto& layers = model.layers();
  if (grads) {
    grads->weights.resize(layers.size());
    grads->biases.resize(layers.size());
  }
  for (std::size_t k = layers.size(); k-- > 0;) {
    const Layer& layer = layers[k];
    Matrix d_pre = d_out;
    if (layer.spec.activation == Activation::kRelu) {
      auto d = d_pre.values();
      auto p = tape.pre[k].values();
      for (std::size_t i = 0; i < d.size(); ++i)
        if (!(p[i] > 0.0)) d[i] = 0.0;
    }
    if (grads) {
      grads->weights[k] = matmul_at(d_pre, tape.inputs[k]);
      Vector db(layer.spec.out_dim, 0.0);
      for (std::size_t r = 0; r < d_pre.rows(); ++r) {
        auto row = d_pre.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
      }
      grads->biases[k] = std::move(db);
    }
    Matrix d_in = matmul(d_pre, layer.weights);
    if (layer.spec.residual) {
      auto di = d_in.values();
      auto dout = d_out.values();
      for (std::size_t i = 0; i < di.size(); ++i) di[i] += dout[i];
    }
    d_out = std::move(d_in);
  }
  return d_out;
}

void check_targets(const Matrix& targets, const Matrix& x, std::size_t classes) {
  require(targets.rows() == x.rows() && targets.cols() == classes,
          "targets " + targets.shape_string() + " do not match batch of " +
              std::to_string(x.rows()) + " rows and " + std::to_string(classes) + " classes");
  for (std::size_t r = 0; r < targets.rows(); ++r) {
    double sum = 0.0;
    for (double v : targets.row(r)) {
      require(v >= -1e-6, "target row " + std::to_string(r) + " has a negative entry");
      sum += v;
    }
    require(std::abs(sum - 1.0) <= 1e-6, "target row " + std::to_string(r) + " is off the simplex");
  }
}

// Mean over rows of -sum t log softmax(z), using log-sum-exp.
double soft_cross_entropy(const Matrix& z, const Matrix& t) {
  double total = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto zr = z.row(r);
    auto tr = t.row(r);
    const double mx = *std::max_element(zr.begin(), zr.end());
    double s = 0.0;
    for (double v : zr) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < zr.size(); ++c)
      if (tr[c] != 0.0) total -= tr[c] * (zr[c] - lse);
  }
  return total / static_cast<double>(z.rows());
}

}  // namespace

MlpModel::MlpModel(std::vector<LayerSpec> specs) {
  validate_specs(specs);
  layers_.reserve(specs.size());
  for (const auto& s : specs)
    layers_.push_back(Layer{s, Matrix(s.out_dim, s.in_dim), Vector(s.out_dim, 0.0)});
}

MlpModel MlpModel::he_init(std::vector<LayerSpec> specs, RngStream& rng) {
  MlpModel m(std::move(specs));
  for (Layer& layer : m.layers_) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(layer.spec.in_dim));
    for (double& w : layer.weights.values()) w = stddev * rng.next_normal();
  }
  return m;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

std::vector<LayerSpec> MlpModel::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l.spec);
  return out;
}

double MlpModel::parameter_norm() const {
  double s = 0.0;
  for (const auto& l : layers_) {
    for (double v : l.weights.values()) s += v * v;
    for (double v : l.bias) s += v * v;
  }
  return std::sqrt(s);
}

bool MlpModel::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.weights.all_finite()) return false;
    for (double v : l.bias)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

bool operator==(const MlpModel& a, const MlpModel& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t k = 0; k < a.layers_.size(); ++k) {
    const auto& la = a.layers_[k];
    const auto& lb = b.layers_[k];
    if (!(la.spec == lb.spec) || !(la.weights == lb.weights) || la.bias != lb.bias) return false;
  }
  return true;
}

std::vector<LayerSpec> residual_mlp_specs(std::size_t input_dim, std::size_t width,
                                          std::size_t depth, std::size_t num_classes) {
  require(depth >= 1, "residual_mlp_specs: depth must be at least 1");
  std::vector<LayerSpec> specs;
  if (depth == 1) return {{input_dim, num_classes, Activation::kIdentity, false}};
  specs.push_back({input_dim, width, Activation::kRelu, false});
  for (std::size_t k = 0; k + 2 < depth; ++k) specs.push_back({width, width, Activation::kRelu, true});
  specs.push_back({width, num_classes, Activation::kIdentity, false});
  return specs;
}

MlpModel linear_logistic_model(std::span<const double> w, double b) {
  require(!w.empty(), "linear_logistic_model: empty weight vector");
  MlpModel m({LayerSpec{w.size(), 2, Activation::kIdentity, false}});
  Layer& layer = m.mutable_layers()[0];
  for (std::size_t c = 0; c < w.size(); ++c) {
    layer.weights(0, c) = 0.5 * w[c];
    layer.weights(1, c) = -0.5 * w[c];
  }
  layer.bias = {0.5 * b, -0.5 * b};
  return m;
}

Matrix logits(const MlpModel& model, const Matrix& x) { return run_forward(model, x).logits; }

PredictionBatch forward(const MlpModel& model, const Matrix& x) {
  PredictionBatch out;
  out.probs = softmax_rows(logits(model, x));
  out.labels.resize(out.probs.rows());
  for (std::size_t r = 0; r < out.probs.rows(); ++r) out.labels[r] = argmax(out.probs.row(r));
  return out;
}

std::vector<std::size_t> predict_labels(const MlpModel& model, const Matrix& x,
                                        std::size_t label_classes) {
  const std::size_t c = label_classes == 0 ? model.num_classes() : label_classes;
  require(c <= model.num_classes(), "predict_labels: more label classes than model outputs");
  const Matrix p = softmax_rows(logits(model, x));
  std::vector<std::size_t> labels(p.rows());
  for (std::size_t r = 0; r < p.rows(); ++r) labels[r] = argmax(p.row(r).first(c));
  return labels;
}

LossAndGrads loss_and_param_grads(const MlpModel& model, const Matrix& x,
                                  const Matrix& target_probs) {
  check_targets(target_probs, x, model.num_classes());
  require(x.rows() > 0, "loss_and_param_grads: empty batch");
  const Tape tape = run_forward(model, x);
  LossAndGrads out;
  out.loss = soft_cross_entropy(tape.logits, target_probs);
  out.probs = softmax_rows(tape.logits);
  Matrix d = out.probs;
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  auto dv = d.values();
  auto tv = target_probs.values();
  for (std::size_t i = 0; i < dv.size(); ++i) dv[i] = (dv[i] - tv[i]) * inv_n;
  run_backward(model, tape, std::move(d), &out.grads);
  return out;
}

double cross_entropy(const MlpModel& model, const Matrix& x, const Matrix& target_probs) {
  check_targets(target_probs, x, model.num_classes());
  return soft_cross_entropy(logits(model, x), target_probs);
}

double evaluate_scalar(const MlpModel& model, std::span<const double> x, const ScalarFn& fn) {
  const Matrix p = softmax_rows(logits(model, Matrix::row_vector(x)));
  if (const auto* g = std::get_if<PosteriorGap>(&fn)) {
    require(g->i != g->j, "g_ij needs i != j");
    require(g->i < model.num_classes() && g->j < model.num_classes(), "g_ij class out of range");
    return p(0, g->i) - p(0, g->j);
  }
  const auto& l = std::get<LossVsOneHot>(fn);
  require(l.cls < model.num_classes(), "loss class out of range");
  const Matrix z = logits(model, Matrix::row_vector(x));
  const Matrix t = one_hot(std::span<const std::size_t>(&l.cls, 1), model.num_classes());
  return soft_cross_entropy(z, t);
}

Vector input_gradient(const MlpModel& model, std::span<const double> x, const ScalarFn& fn) {
  const Tape tape = run_forward(model, Matrix::row_vector(x));
  const Matrix p = softmax_rows(tape.logits);
  const std::size_t c = model.num_classes();
  Matrix d(1, c);
  if (const auto* g = std::get_if<PosteriorGap>(&fn)) {
    require(g->i != g->j, "g_ij needs i != j");
    require(g->i < c && g->j < c, "g_ij class out of range");
    const double pi = p(0, g->i), pj = p(0, g->j);
    for (std::size_t k = 0; k < c; ++k) {
      const double di = (k == g->i ? pi : 0.0) - pi * p(0, k);
      const double dj = (k == g->j ? pj : 0.0) - pj * p(0, k);
      d(0, k) = di - dj;
    }
  } else {
    const auto& l = std::get<LossVsOneHot>(fn);
    require(l.cls < c, "loss class out of range");
    for (std::size_t k = 0; k < c; ++k) d(0, k) = p(0, k) - (k == l.cls ? 1.0 : 0.0);
  }
  const Matrix dx = run_backward(model, tape, std::move(d), nullptr);
  return Vector(dx.values().begin(), dx.values().end());
}

Matrix input_gradients_ce(const MlpModel& model, const Matrix& x,
                          std::span<const std::size_t> classes) {
  require(classes.size() == x.rows(), "input_gradients_ce: one class per row required");
  const Tape tape = run_forward(model, x);
  Matrix d = softmax_rows(tape.logits);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    require(classes[r] < model.num_classes(), "input_gradients_ce: class out of range");
    d(r, classes[r]) -= 1.0;
  }
  return run_backward(model, tape, std::move(d), nullptr);
}

Vector posterior_gaps(const MlpModel& model, const Matrix& x, std::size_t i, std::size_t j) {
  require(i != j, "g_ij needs i != j");
  require(i < model.num_classes() && j < model.num_classes(), "g_ij class out of range");
  const Matrix p = softmax_rows(logits(model, x));
  Vector g(p.rows());
  for (std::size_t r = 0; r < p.rows(); ++r) g[r] = p(r, i) - p(r, j);
  return g;
}

Matrix one_hot(std::span<const std::size_t> labels, std::size_t num_classes) {
  Matrix m(labels.size(), num_classes);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    require(labels[r] < num_classes, "one_hot: label " + std::to_string(labels[r]) + " out of range");
    m(r, labels[r]) = 1.0;
  }
  return m;
}

}  // namespace bthick
