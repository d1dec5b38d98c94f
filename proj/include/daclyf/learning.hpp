#pragma once

#include <memory>
#include <string>

#include "daclyf/clf.hpp"
#include "daclyf/dynamics.hpp"
#include "daclyf/numerics.hpp"

namespace daclyf {

/// Two-layer perceptron with a single ReLU hidden layer:
/// out = W2 relu(W1 x + b1) + b2. Piecewise linear by construction.
struct Mlp {
  int in = 0;
  int hidden = 0;
  int out = 0;
  Matrix w1;  // hidden x in
  Vec b1;     // hidden
  Matrix w2;  // out x hidden
  Vec b2;     // out

  Vec forward(const Vec& x) const;
  int parameter_count() const { return hidden * in + hidden + out * hidden + out; }
};

/// He-scaled random initialization: weights ~ N(0, 2/fan_in), biases zero.
Mlp mlp_he_init(int in, int hidden, int out, RngStream& rng);

struct MlpGrads {
  Matrix w1;
  Vec b1;
  Matrix w2;
  Vec b2;

  explicit MlpGrads(const Mlp& net);
  void zero();
};

/// Reverse-mode gradients of upstream^T f(x) with respect to all
/// parameters, accumulated into `acc`. The ReLU subgradient at 0 is 0.
void mlp_backward(const Mlp& net, const Vec& x, const Vec& upstream, MlpGrads& acc);

/// One training sample: state, error coordinates, executed input and the
/// numerically differenced Lyapunov derivative target, tagged with the
/// tick time (needed to evaluate the model-based estimate underneath).
struct Sample {
  double t = 0.0;
  Vec q;
  Vec qd;
  Vec eta;
  Vec u;
  double vdot = 0.0;
};

/// Aggregated training data across episodes. Samples are appended, never
/// replaced; episode_sizes records the per-episode counts.
struct Dataset {
  std::vector<Sample> samples;
  std::vector<int> episode_sizes;

  int size() const { return static_cast<int>(samples.size()); }
  void append(const Dataset& other);
};

/// Regressor inputs: all states plus the Lyapunov function gradient,
/// (q, qd, 2 P eta). Dimension n + n + 2k.
Vec features(const Vec& q, const Vec& qd, const Vec& eta, const Clf& clf);

/// Turns a closed-loop trajectory into samples: V is evaluated at every
/// recorded state, differenced over the control ticks to estimate Vdot,
/// and paired with the state and held input at the same tick. The final
/// state has no held input and is dropped.
Dataset make_dataset(const StateTrajectory& traj, const TrackingProblem& tp,
                     const Clf& clf);

/// Learned correction to the model-based Lyapunov derivative estimate:
///   What_dot(eta, q, qd, u) = Vdot_est(eta, u) + a_net(x)^T u + b_net(x),
/// affine in u by construction.
class ResidualEstimator {
 public:
  ResidualEstimator() = default;
  ResidualEstimator(Mlp a_net, Mlp b_net, std::shared_ptr<const VdotModel> base);

  VdotAffine affine(const Vec& q, const Vec& qd, double t) const;
  double what_dot(const Vec& q, const Vec& qd, double t, const Vec& u) const;

  /// Residual terms alone at a feature vector: (a_net(x), b_net(x)).
  Vec residual_a(const Vec& x) const { return a_net_.forward(x); }
  double residual_b(const Vec& x) const { return b_net_.forward(x)[0]; }

  const Mlp& a_net() const { return a_net_; }
  const Mlp& b_net() const { return b_net_; }
  const std::shared_ptr<const VdotModel>& base() const { return base_; }
  bool empty() const { return base_ == nullptr; }

 private:
  Mlp a_net_;
  Mlp b_net_;
  std::shared_ptr<const VdotModel> base_;
};

struct TrainConfig {
  int hidden_width = 128;
  double learning_rate = 1e-3;  // initial Adam step, cosine-decayed over the epochs
  int batch_size = 64;
  int epochs = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct TrainResult {
  ResidualEstimator estimator;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;  // running mean of minibatch losses
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Empirical risk minimization of the mean squared error
///   (1/N) sum (What_dot_i - Vdot_i)^2
/// jointly over both networks with mini-batch Adam. Networks are freshly
/// initialized from `rng`; the base model estimate per sample is fixed.
/// Throws TrainingError on a non-finite loss. The returned estimator
/// never has a higher full-data loss than the fresh initialization.
TrainResult fit_erm(const Dataset& data, std::shared_ptr<const VdotModel> base,
                    const TrainConfig& cfg, RngStream& rng);

/// Mean squared error of the estimator over a dataset.
double erm_loss(const ResidualEstimator& est, const Dataset& data);

/// Flat binary serialization: a short header with the layer dimensions
/// followed by row-major parameter blocks for both networks (see README
/// for the exact layout). Loading restores the networks; the base model
/// must be supplied by the caller.
void save_estimator(const std::string& path, const ResidualEstimator& est);
ResidualEstimator load_estimator(const std::string& path,
                                 std::shared_ptr<const VdotModel> base);

}  // namespace daclyf
