#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "bthick/numerics.hpp"

namespace bthick {

enum class Activation { kIdentity, kRelu };

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::kRelu;
  /// out = activation(W x + b) + x; needs in_dim == out_dim.
  bool residual = false;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Layer {
  LayerSpec spec;
  Matrix weights;  // out_dim x in_dim
  Vector bias;     // out_dim
};

/// Feed-forward classifier with a softmax head over the final layer.
class MlpModel {
 public:
  MlpModel() = default;
  /// Zero-initialized parameters.
  explicit MlpModel(std::vector<LayerSpec> specs);

  /// He initialization: weights ~ N(0, 2 / in_dim), biases zero.
  static MlpModel he_init(std::vector<LayerSpec> specs, RngStream& rng);

  std::size_t input_dim() const { return layers_.front().spec.in_dim; }
  std::size_t num_classes() const { return layers_.back().spec.out_dim; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t parameter_count() const;

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }
  std::vector<LayerSpec> specs() const;

  /// Euclidean norm of all weights and biases.
  double parameter_norm() const;
  bool all_finite() const;

  friend bool operator==(const MlpModel& a, const MlpModel& b);

 private:
  std::vector<Layer> layers_;
};

/// Stack of `depth` layers: input -> width (relu), (depth - 2) residual
/// width -> width relu layers, width -> classes (identity). Depth 1 is a
/// single linear layer.
std::vector<LayerSpec> residual_mlp_specs(std::size_t input_dim, std::size_t width,
                                          std::size_t depth, std::size_t num_classes);

/// Two-class single-layer model whose softmax equals
/// [sigmoid(w.x + b), 1 - sigmoid(w.x + b)] (rows +w/2 and -w/2).
MlpModel linear_logistic_model(std::span<const double> w, double b);

struct PredictionBatch {
  Matrix probs;
  std::vector<std::size_t> labels;
};

Matrix logits(const MlpModel& model, const Matrix& x);
PredictionBatch forward(const MlpModel& model, const Matrix& x);

/// Argmax over the first `label_classes` outputs only (masks extra classes
/// such as the noisy-mixup NONE output). 0 means all outputs.
std::vector<std::size_t> predict_labels(const MlpModel& model, const Matrix& x,
                                        std::size_t label_classes = 0);

struct ParamGrads {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

struct LossAndGrads {
  double loss = 0.0;
  ParamGrads grads;
  Matrix probs;
};

/// Mean soft-target cross-entropy over rows and its parameter gradients.
LossAndGrads loss_and_param_grads(const MlpModel& model, const Matrix& x,
                                  const Matrix& target_probs);

/// Mean cross-entropy without gradients.
double cross_entropy(const MlpModel& model, const Matrix& x, const Matrix& target_probs);

struct LossVsOneHot {
  std::size_t cls;
};
/// g_ij(x) = f(x)_i - f(x)_j.
struct PosteriorGap {
  std::size_t i;
  std::size_t j;
};
using ScalarFn = std::variant<LossVsOneHot, PosteriorGap>;

double evaluate_scalar(const MlpModel& model, std::span<const double> x, const ScalarFn& fn);
Vector input_gradient(const MlpModel& model, std::span<const double> x, const ScalarFn& fn);

/// Row k of the result is the gradient of -log softmax(x_k)[classes[k]] with
/// respect to x_k. Rows are independent of each other.
Matrix input_gradients_ce(const MlpModel& model, const Matrix& x,
                          std::span<const std::size_t> classes);

/// g_ij evaluated at every row of x.
Vector posterior_gaps(const MlpModel& model, const Matrix& x, std::size_t i, std::size_t j);

Matrix one_hot(std::span<const std::size_t> labels, std::size_t num_classes);

// Checkpoints ---------------------------------------------------------------

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kIo, kVersion, kMalformed, kShape };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_checkpoint(const std::filesystem::path& path);

std::vector<unsigned char> encode_checkpoint(const MlpModel& model);
MlpModel decode_checkpoint(std::span<const unsigned char> bytes);

}  // namespace bthick
