#include "daclyf/learning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <utility>

namespace daclyf {

Vec Mlp::forward(const Vec& x) const {
  Vec h(hidden);
  for (int i = 0; i < hidden; ++i) {
    double acc = b1[i];
    const double* wrow = &w1.data[static_cast<size_t>(i) * in];
    for (int j = 0; j < in; ++j) acc += wrow[j] * x[j];
    h[i] = acc > 0.0 ? acc : 0.0;
  }
  Vec y(out);
  for (int o = 0; o < out; ++o) {
    double acc = b2[o];
    const double* wrow = &w2.data[static_cast<size_t>(o) * hidden];
    for (int i = 0; i < hidden; ++i) acc += wrow[i] * h[i];
    y[o] = acc;
  }
  return y;
}

Mlp mlp_he_init(int in, int hidden, int out, RngStream& rng) {
  Mlp net;
  net.in = in;
  net.hidden = hidden;
  net.out = out;
  net.w1 = Matrix(hidden, in);
  net.b1.assign(hidden, 0.0);
  net.w2 = Matrix(out, hidden);
  net.b2.assign(out, 0.0);
  const double s1 = std::sqrt(2.0 / in);
  for (double& w : net.w1.data) w = s1 * rng.gaussian();
  const double s2 = std::sqrt(2.0 / hidden);
  for (double& w : net.w2.data) w = s2 * rng.gaussian();
  return net;
}

MlpGrads::MlpGrads(const Mlp& net)
    : w1(net.hidden, net.in), b1(net.hidden, 0.0), w2(net.out, net.hidden),
      b2(net.out, 0.0) {}

void MlpGrads::zero() {
  std::fill(w1.data.begin(), w1.data.end(), 0.0);
  std::fill(b1.begin(), b1.end(), 0.0);
  std::fill(w2.data.begin(), w2.data.end(), 0.0);
  std::fill(b2.begin(), b2.end(), 0.0);
}

void mlp_backward(const Mlp& net, const Vec& x, const Vec& upstream, MlpGrads& acc) {
  // forward pass, keeping preactivations
  Vec z(net.hidden);
  for (int i = 0; i < net.hidden; ++i) {
    double a = net.b1[i];
    const double* wrow = &net.w1.data[static_cast<size_t>(i) * net.in];
    for (int j = 0; j < net.in; ++j) a += wrow[j] * x[j];
    z[i] = a;
  }
  // output layer grads and hidden backprop signal
  Vec dh(net.hidden, 0.0);
  for (int o = 0; o < net.out; ++o) {
    const double g = upstream[o];
    acc.b2[o] += g;
    double* gw2 = &acc.w2.data[static_cast<size_t>(o) * net.hidden];
    const double* w2row = &net.w2.data[static_cast<size_t>(o) * net.hidden];
    for (int i = 0; i < net.hidden; ++i) {
      const double hi = z[i] > 0.0 ? z[i] : 0.0;
      gw2[i] += g * hi;
      dh[i] += g * w2row[i];
    }
  }
  // through the ReLU (subgradient 0 at the kink)
  for (int i = 0; i < net.hidden; ++i) {
    if (z[i] <= 0.0) continue;
    const double gi = dh[i];
    acc.b1[i] += gi;
    double* gw1 = &acc.w1.data[static_cast<size_t>(i) * net.in];
    for (int j = 0; j < net.in; ++j) gw1[j] += gi * x[j];
  }
}

void Dataset::append(const Dataset& other) {
  samples.insert(samples.end(), other.samples.begin(), other.samples.end());
  episode_sizes.insert(episode_sizes.end(), other.episode_sizes.begin(),
                       other.episode_sizes.end());
}

Vec features(const Vec& q, const Vec& qd, const Vec& eta, const Clf& clf) {
  return concat(concat(q, qd), clf.gradient(eta));
}

Dataset make_dataset(const StateTrajectory& traj, const TrackingProblem& tp,
                     const Clf& clf) {
  const size_t ticks = traj.states.size();
  if (ticks < 3) {
    throw std::invalid_argument("make_dataset: trajectory too short (need >= 3 ticks)");
  }
  const double dt = traj.times[1] - traj.times[0];
  const int n = traj.n;

  std::vector<double> v(ticks);
  std::vector<Vec> etas(ticks);
  for (size_t i = 0; i < ticks; ++i) {
    const Vec q(traj.states[i].begin(), traj.states[i].begin() + n);
    const Vec qd(traj.states[i].begin() + n, traj.states[i].end());
    etas[i] = error_state(tp, q, qd, traj.times[i]);
    v[i] = clf.value(etas[i]);
  }
  const std::vector<double> vdot = central_difference(v, dt);

  Dataset data;
  data.samples.reserve(ticks - 1);
  for (size_t i = 0; i + 1 < ticks; ++i) {
    Sample s;
    s.t = traj.times[i];
    s.q.assign(traj.states[i].begin(), traj.states[i].begin() + n);
    s.qd.assign(traj.states[i].begin() + n, traj.states[i].end());
    s.eta = etas[i];
    s.u = traj.inputs[i];
    s.vdot = vdot[i];
    data.samples.push_back(std::move(s));
  }
  data.episode_sizes.push_back(data.size());
  return data;
}

ResidualEstimator::ResidualEstimator(Mlp a_net, Mlp b_net,
                                     std::shared_ptr<const VdotModel> base)
    : a_net_(std::move(a_net)), b_net_(std::move(b_net)), base_(std::move(base)) {}

VdotAffine ResidualEstimator::affine(const Vec& q, const Vec& qd, double t) const {
  VdotAffine out = base_->affine(q, qd, t);
  const Vec eta = error_state(base_->tracking(), q, qd, t);
  const Vec x = features(q, qd, eta, base_->clf());
  const Vec a = a_net_.forward(x);
  for (size_t j = 0; j < out.input_coeff.size(); ++j) out.input_coeff[j] += a[j];
  out.drift += b_net_.forward(x)[0];
  return out;
}

double ResidualEstimator::what_dot(const Vec& q, const Vec& qd, double t,
                                   const Vec& u) const {
  return affine(q, qd, t).eval(u);
}

namespace {

// Adam state for one parameter block.
struct AdamBlock {
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamBlock(size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad,
            double lr, double beta1, double beta2, double eps, double bc1, double bc2) {
    for (size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

double full_loss(const Mlp& a_net, const Mlp& b_net, const std::vector<Vec>& xs,
                 const std::vector<Vec>& us, const std::vector<double>& targets) {
  double acc = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const Vec a = a_net.forward(xs[i]);
    const double pred = dot(a, us[i]) + b_net.forward(xs[i])[0];
    const double e = pred - targets[i];
    acc += e * e;
  }
  return acc / static_cast<double>(xs.size());
}

}  // namespace

TrainResult fit_erm(const Dataset& data, std::shared_ptr<const VdotModel> base,
                    const TrainConfig& cfg, RngStream& rng) {
  if (data.size() == 0) throw std::invalid_argument("fit_erm: empty dataset");
  const int n_samples = data.size();
  const int m = base->model().m;
  const Clf& clf = base->clf();

  // cache features, inputs and residual targets (target minus the fixed
  // model-based estimate at the sample)
  std::vector<Vec> xs(n_samples);
  std::vector<Vec> us(n_samples);
  std::vector<double> targets(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const Sample& s = data.samples[i];
    xs[i] = features(s.q, s.qd, s.eta, clf);
    us[i] = s.u;
    targets[i] = s.vdot - base->eval(s.q, s.qd, s.t, s.u);
  }
  const int feat_dim = static_cast<int>(xs[0].size());

  RngStream init_rng = rng.split("init");
  Mlp a_net = mlp_he_init(feat_dim, cfg.hidden_width, m, init_rng);
  Mlp b_net = mlp_he_init(feat_dim, cfg.hidden_width, 1, init_rng);
  // zero output layers: the correction starts at exactly zero and only
  // grows what the data demands
  std::fill(a_net.w2.data.begin(), a_net.w2.data.end(), 0.0);
  std::fill(b_net.w2.data.begin(), b_net.w2.data.end(), 0.0);
  const Mlp a_init = a_net;
  const Mlp b_init = b_net;

  TrainResult result;
  result.initial_loss = full_loss(a_net, b_net, xs, us, targets);

  AdamBlock adam_a_w1(a_net.w1.data.size()), adam_a_b1(a_net.b1.size());
  AdamBlock adam_a_w2(a_net.w2.data.size()), adam_a_b2(a_net.b2.size());
  AdamBlock adam_b_w1(b_net.w1.data.size()), adam_b_b1(b_net.b1.size());
  AdamBlock adam_b_w2(b_net.w2.data.size()), adam_b_b2(b_net.b2.size());

  MlpGrads ga(a_net);
  MlpGrads gb(b_net);

  std::vector<int> order(n_samples);
  std::iota(order.begin(), order.end(), 0);
  RngStream shuffle_rng = rng.split("shuffle");

  constexpr double kPi = 3.14159265358979323846;
  long step_count = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // cosine step-size decay: constant-step Adam stalls on a parameter
    // jitter floor well above the differencing noise of the targets
    const double lr =
        cfg.learning_rate * 0.5 * (1.0 + std::cos(kPi * epoch / cfg.epochs));
    // Fisher-Yates with the seeded stream
    for (int i = n_samples - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.next_u64() % static_cast<uint64_t>(i + 1));
      std::swap(order[i], order[j]);
    }
    double epoch_loss_acc = 0.0;
    int batches = 0;
    for (int start = 0; start < n_samples; start += cfg.batch_size) {
      const int bsz = std::min(cfg.batch_size, n_samples - start);
      ga.zero();
      gb.zero();
      double batch_loss = 0.0;
      for (int bi = 0; bi < bsz; ++bi) {
        const int idx = order[start + bi];
        const Vec& x = xs[idx];
        const Vec a = a_net.forward(x);
        const double b = b_net.forward(x)[0];
        const double e = dot(a, us[idx]) + b - targets[idx];
        batch_loss += e * e;
        const double scale = 2.0 * e / bsz;
        Vec up_a(m);
        for (int j = 0; j < m; ++j) up_a[j] = scale * us[idx][j];
        mlp_backward(a_net, x, up_a, ga);
        mlp_backward(b_net, x, Vec{scale}, gb);
      }
      batch_loss /= bsz;
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("fit_erm: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batches) + " (loss=" +
                            std::to_string(batch_loss) + ")");
      }
      epoch_loss_acc += batch_loss;
      ++batches;
      ++step_count;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_count));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count));
      adam_a_w1.step(a_net.w1.data, ga.w1.data, lr, cfg.beta1, cfg.beta2,
                     cfg.adam_eps, bc1, bc2);
      adam_a_b1.step(a_net.b1, ga.b1, lr, cfg.beta1, cfg.beta2,
                     cfg.adam_eps, bc1, bc2);
      adam_a_w2.step(a_net.w2.data, ga.w2.data, lr, cfg.beta1, cfg.beta2,
                     cfg.adam_eps, bc1, bc2);
      adam_a_b2.step(a_net.b2, ga.b2, lr, cfg.beta1, cfg.beta2,
                     cfg.adam_eps, bc1, bc2);
      adam_b_w1.step(b_net.w1.data, gb.w1.data, lr, cfg.beta1, cfg.beta2,
                     cfg.adam_eps, bc1, bc2);
      adam_b_b1.step(b_net.b1, gb.b1, lr, cfg.beta1, cfg.beta2,
                     cfg.adam_eps, bc1, bc2);
      adam_b_w2.step(b_net.w2.data, gb.w2.data, lr, cfg.beta1, cfg.beta2,
                     cfg.adam_eps, bc1, bc2);
      adam_b_b2.step(b_net.b2, gb.b2, lr, cfg.beta1, cfg.beta2,
                     cfg.adam_eps, bc1, bc2);
    }
    (void)epoch_loss_acc;
    result.epoch_losses.push_back(full_loss(a_net, b_net, xs, us, targets));
  }

  result.final_loss = full_loss(a_net, b_net, xs, us, targets);
  if (result.final_loss > result.initial_loss) {
    // optimizer failed to improve on the fresh initialization; keep the init
    a_net = a_init;
    b_net = b_init;
    result.final_loss = result.initial_loss;
  }
  result.estimator = ResidualEstimator(std::move(a_net), std::move(b_net), std::move(base));
  return result;
}

double erm_loss(const ResidualEstimator& est, const Dataset& data) {
  double acc = 0.0;
  for (const Sample& s : data.samples) {
    const double e = est.what_dot(s.q, s.qd, s.t, s.u) - s.vdot;
    acc += e * e;
  }
  return acc / static_cast<double>(data.size());
}

namespace {

constexpr char kMagic[8] = {'R', 'E', 'S', 'T', 'M', 'T', 'R', '1'};

void write_block(std::ofstream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_block(std::ifstream& in, std::vector<double>& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void write_net(std::ofstream& out, const Mlp& net) {
  write_block(out, net.w1.data);
  write_block(out, net.b1);
  write_block(out, net.w2.data);
  write_block(out, net.b2);
}

void read_net(std::ifstream& in, Mlp& net) {
  net.w1 = Matrix(net.hidden, net.in);
  net.b1.assign(net.hidden, 0.0);
  net.w2 = Matrix(net.out, net.hidden);
  net.b2.assign(net.out, 0.0);
  read_block(in, net.w1.data);
  read_block(in, net.b1);
  read_block(in, net.w2.data);
  read_block(in, net.b2);
}

}  // namespace

void save_estimator(const std::string& path, const ResidualEstimator& est) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_estimator: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  const uint32_t dims[4] = {static_cast<uint32_t>(est.a_net().in),
                            static_cast<uint32_t>(est.a_net().hidden),
                            static_cast<uint32_t>(est.a_net().out),
                            static_cast<uint32_t>(est.b_net().hidden)};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  write_net(out, est.a_net());
  write_net(out, est.b_net());
  if (!out) throw std::runtime_error("save_estimator: write failed for " + path);
}

ResidualEstimator load_estimator(const std::string& path,
                                 std::shared_ptr<const VdotModel> base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_estimator: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("load_estimator: bad header in " + path);
  }
  uint32_t dims[4];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  Mlp a_net;
  a_net.in = static_cast<int>(dims[0]);
  a_net.hidden = static_cast<int>(dims[1]);
  a_net.out = static_cast<int>(dims[2]);
  Mlp b_net;
  b_net.in = a_net.in;
  b_net.hidden = static_cast<int>(dims[3]);
  b_net.out = 1;
  read_net(in, a_net);
  read_net(in, b_net);
  if (!in) throw std::runtime_error("load_estimator: truncated file " + path);
  return ResidualEstimator(std::move(a_net), std::move(b_net), std::move(base));
}

}  // namespace daclyf
