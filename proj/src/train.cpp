#include "bthick/train.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "bthick/errors.hpp"

namespace bthick {

void TrainConfig::validate() const {
  require(learning_rate >= 0.0, "TrainConfig: learning_rate must be non-negative");
  require(momentum >= 0.0 && momentum < 1.0, "TrainConfig: momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, "TrainConfig: weight_decay must be non-negative");
  require(l1_coeff >= 0.0, "TrainConfig: l1_coeff must be non-negative");
  require(batch_size >= 1, "TrainConfig: batch_size must be positive");
  for (const auto& s : lr_decay) require(s.factor > 0.0, "TrainConfig: lr decay factor must be positive");
}

double TrainConfig::rate_at(std::size_t epoch) const {
  double lr = learning_rate;
  for (const auto& s : lr_decay)
    if (epoch >= s.epoch) lr *= s.factor;
  return lr;
}

void MixupConfig::validate() const {
  require(beta_a > 0.0, "MixupConfig: beta_a must be positive");
  require(noise_prob >= 0.0 && noise_prob <= 1.0, "MixupConfig: noise_prob must lie in [0, 1]");
  require(!noisy || enabled, "MixupConfig: noisy mixup requires mixup");
  if (fixed_lambda) require(*fixed_lambda >= 0.0 && *fixed_lambda <= 1.0, "MixupConfig: lambda outside [0, 1]");
}

TrainingDiverged::TrainingDiverged(std::size_t e, std::size_t b, double norm)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "training diverged: non-finite loss at epoch " << e << ", batch " << b
           << ", parameter norm " << norm;
        return os.str();
      }()),
      epoch(e),
      batch(b),
      parameter_norm(norm) {}

MixedBatch mixup_batch(const Matrix& x, const Matrix& y_onehot, const MixupConfig& mix,
                       RngStream& rng) {
  require(mix.enabled, "mixup_batch: mixup is disabled");
  mix.validate();
  require(x.rows() == y_onehot.rows(), "mixup_batch: inputs and labels differ in rows");
  const std::size_t n = x.rows(), d = x.cols(), c = y_onehot.cols();
  const std::size_t none = c - 1;
  if (mix.noisy) {
    require(c >= 2, "mixup_batch: noisy mixup needs a NONE column");
    for (std::size_t r = 0; r < n; ++r)
      require(y_onehot(r, none) == 0.0,
              "mixup_batch: noisy mixup needs a dedicated NONE class as the last label column");
  }
  const auto partner = permutation(rng, n);
  MixedBatch out{Matrix(n, d), Matrix(n, c), 0};
  Vector noise_a(d), noise_b(d);
  for (std::size_t r = 0; r < n; ++r) {
    const double lambda = mix.fixed_lambda ? *mix.fixed_lambda : rng.next_beta(mix.beta_a, mix.beta_a);
    std::span<const double> xa = x.row(r), xb = x.row(partner[r]);
    std::span<const double> ya = y_onehot.row(r), yb = y_onehot.row(partner[r]);
    bool a_noise = false, b_noise = false;
    if (mix.noisy) {
      a_noise = rng.next_bernoulli(mix.noise_prob);
      b_noise = rng.next_bernoulli(mix.noise_prob);
      if (a_noise) {
        for (double& v : noise_a) v = rng.next_unit();
        xa = noise_a;
      }
      if (b_noise) {
        for (double& v : noise_b) v = rng.next_unit();
        xb = noise_b;
      }
      out.pairs_with_noise += (a_noise || b_noise);
    }
    auto xo = out.x.row(r);
    for (std::size_t k = 0; k < d; ++k) xo[k] = lambda * xa[k] + (1.0 - lambda) * xb[k];
    auto yo = out.y.row(r);
    for (std::size_t k = 0; k < c; ++k) {
      const double ta = a_noise ? (k == none ? 1.0 : 0.0) : ya[k];
      const double tb = b_noise ? (k == none ? 1.0 : 0.0) : yb[k];
      yo[k] = lambda * ta + (1.0 - lambda) * tb;
    }
  }
  return out;
}

Matrix cutout_batch(const Matrix& x, const CutoutConfig& cut, RngStream& rng) {
  require(cut.enabled, "cutout_batch: cutout is disabled");
  require(cut.window <= x.cols(), "cutout_batch: window exceeds input dimension");
  Matrix out = x;
  if (cut.window == 0) return out;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const std::size_t start = rng.next_index(x.cols() - cut.window + 1);
    auto row = out.row(r);
    std::fill(row.begin() + static_cast<std::ptrdiff_t>(start),
              row.begin() + static_cast<std::ptrdiff_t>(start + cut.window), 0.0);
  }
  return out;
}

Matrix adversarial_train_step(const MlpModel& model, const Matrix& x,
                              std::span<const std::size_t> labels, const AdvTrainConfig& adv,
                              const RngStream& rng) {
  require(adv.enabled, "adversarial_train_step: adversarial training is disabled");
  AttackConfig cfg = adv.attack;
  cfg.target.reset();
  return pgd_batch(model, x, labels, cfg, {}, rng).x_adv;
}

double evaluate_accuracy(const MlpModel& model, const Dataset& data) {
  return accuracy(predict_labels(model, data.x, data.num_classes), data.y);
}

TrainResult train(MlpModel model, const Dataset& data, const TrainConfig& cfg,
                  const MixupConfig& mix, const AdvTrainConfig& adv, const CutoutConfig& cut,
                  const TrainOptions& options) {
  cfg.validate();
  mix.validate();
  data.validate();
  require(!(mix.enabled && adv.enabled), "train: mixup and adversarial training are exclusive");
  require(data.dim() == model.input_dim(), "train: data dimension does not match model input");
  const std::size_t classes = model.num_classes();
  if (mix.noisy)
    require(classes == data.num_classes + 1,
            "train: noisy mixup needs num_classes + 1 model outputs (NONE class)");
  else
    require(classes >= data.num_classes, "train: model has fewer outputs than data classes");
  if (adv.enabled) adv.attack.validate();
  if (cut.enabled) require(cut.window <= data.dim(), "train: cutout window exceeds input dimension");

  const RngStream root(cfg.seed);
  const std::size_t n = data.size();
  std::vector<Matrix> vel_w;
  std::vector<Vector> vel_b;
  for (const auto& l : model.layers()) {
    vel_w.emplace_back(l.weights.rows(), l.weights.cols());
    vel_b.emplace_back(l.bias.size(), 0.0);
  }

  TrainResult result;
  const std::size_t last = cfg.early_stop_epoch ? std::min(cfg.epochs, *cfg.early_stop_epoch) : cfg.epochs;
  for (std::size_t epoch = 0; epoch < last; ++epoch) {
    const double lr = cfg.rate_at(epoch);
    const RngStream epoch_rng = root.child(epoch);
    RngStream shuffle_rng = epoch_rng.child(0);
    const auto order = permutation(shuffle_rng, n);

    double loss_sum = 0.0;
    std::size_t hits = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      Matrix x(rows.size(), data.dim());
      std::vector<std::size_t> labels(rows.size());
      for (std::size_t k = 0; k < rows.size(); ++k) {
        auto src = data.x.row(rows[k]);
        std::copy(src.begin(), src.end(), x.row(k).begin());
        labels[k] = data.y[rows[k]];
      }
      Matrix targets = one_hot(labels, classes);

      const RngStream aug = epoch_rng.child(1 + batch_index);
      if (cut.enabled) {
        RngStream r = aug.child(0);
        x = cutout_batch(x, cut, r);
      }
      if (mix.enabled) {
        RngStream r = aug.child(1);
        auto mixed = mixup_batch(x, targets, mix, r);
        x = std::move(mixed.x);
        targets = std::move(mixed.y);
      }
      if (adv.enabled) x = adversarial_train_step(model, x, labels, adv, aug.child(2));

      LossAndGrads lg;
      try {
        lg = loss_and_param_grads(model, x, targets);
      } catch (const ContractViolation&) {
        // Inputs and targets were validated above, so this is an overflow in
        // the forward pass.
        throw TrainingDiverged(epoch, batch_index, model.parameter_norm());
      }
      if (!std::isfinite(lg.loss)) throw TrainingDiverged(epoch, batch_index, model.parameter_norm());
      loss_sum += lg.loss * static_cast<double>(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r)
        hits += argmax(lg.probs.row(r)) == argmax(targets.row(r));

      auto& layers = model.mutable_layers();
      for (std::size_t k = 0; k < layers.size(); ++k) {
        auto w = layers[k].weights.values();
        auto gw = lg.grads.weights[k].values();
        auto vw = vel_w[k].values();
        for (std::size_t i = 0; i < w.size(); ++i) {
          double g = gw[i] + cfg.weight_decay * w[i];
          if (cfg.l1_coeff > 0.0 && w[i] != 0.0) g += cfg.l1_coeff * (w[i] > 0.0 ? 1.0 : -1.0);
          vw[i] = cfg.momentum * vw[i] + g;
          w[i] -= lr * vw[i];
        }
        auto& b = layers[k].bias;
        const auto& gb = lg.grads.biases[k];
        auto& vb = vel_b[k];
        for (std::size_t i = 0; i < b.size(); ++i) {
          double g = gb[i] + cfg.weight_decay * b[i];
          if (cfg.l1_coeff > 0.0 && b[i] != 0.0) g += cfg.l1_coeff * (b[i] > 0.0 ? 1.0 : -1.0);
          vb[i] = cfg.momentum * vb[i] + g;
          b[i] -= lr * vb[i];
        }
      }
      if (!model.all_finite()) throw TrainingDiverged(epoch, batch_index, model.parameter_norm());
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.learning_rate = lr;
    m.train_loss = loss_sum / static_cast<double>(n);
    m.train_acc = static_cast<double>(hits) / static_cast<double>(n);
    if (options.eval) m.eval_acc = evaluate_accuracy(model, *options.eval);
    if (options.thickness_hook && options.thickness_every > 0 && (epoch + 1) % options.thickness_every == 0)
      m.thickness = options.thickness_hook(model);
    if (options.log) {
      *options.log << "epoch " << m.epoch << " lr " << lr << " loss " << m.train_loss << " acc "
                   << m.train_acc;
      if (m.eval_acc) *options.log << " eval_acc " << *m.eval_acc;
      if (m.thickness) *options.log << " thickness " << *m.thickness;
      *options.log << '\n';
    }
    result.epochs.push_back(m);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace bthick
