#include "langtime/ppo/objective.hpp"

#include <cmath>
#include <string>

namespace langtime::ppo {

void RewardConfig::Validate() const {
  if (!(tau > 0.0)) throw PpoError("reward tau must be positive");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw PpoError("reward weights must be non-negative");
    sum += w;
  }
  if (!(sum > 0.0)) throw PpoError("reward weights must not all be zero");
  if (!(beta >= 0.0)) throw PpoError("reward beta must be non-negative");
  if (!(eps_num > 0.0)) throw PpoError("reward eps_num must be positive");
  if (!(sigma_floor > 0.0)) throw PpoError("reward sigma_floor must be positive");
}

void PpoConfig::Validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw PpoError("gamma must lie in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw PpoError("lambda must lie in [0, 1]");
  if (!(xi > 0.0 && xi <= 1.0)) throw PpoError("xi must lie in (0, 1]");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw PpoError("clip epsilon must lie in (0, 1)");
  if (!(eta >= 0.0)) throw PpoError("eta must be non-negative");
  if (inner_epochs < 1) throw PpoError("inner epochs must be positive");
  if (!(sigma_floor > 0.0)) throw PpoError("sigma_floor must be positive");
}

namespace {

void CheckPair(std::span<const double> a, std::span<const double> b, std::size_t min_len) {
  if (a.size() != b.size()) {
    throw PpoError("length mismatch: " + std::to_string(a.size()) + " vs " +
                   std::to_string(b.size()));
  }
  if (a.size() < min_len) {
    throw PpoError("sequences need at least " + std::to_string(min_len) + " points");
  }
}

}  // namespace

Moments SequenceMoments(std::span<const double> y, double sigma_floor) {
  if (y.empty()) throw PpoError("moments of an empty sequence");
  Moments m;
  for (double v : y) m.mean += v;
  m.mean /= static_cast<double>(y.size());
  for (double v : y) m.var += (v - m.mean) * (v - m.mean);
  m.var /= static_cast<double>(y.size());
  m.var = std::max(m.var, sigma_floor * sigma_floor);
  return m;
}

double GaussianKl(double mu_p, double var_p, double mu_q, double var_q) {
  const double d = mu_p - mu_q;
  return 0.5 * std::log(var_q / var_p) + (var_p + d * d) / (2.0 * var_q) - 0.5;
}

double Mse(std::span<const double> a, std::span<const double> b) {
  CheckPair(a, b, 1);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

RewardDimensions ComputeRewardDimensions(std::span<const double> y_hat,
                                         std::span<const double> y, double eps_num,
                                         double sigma_floor) {
  CheckPair(y_hat, y, 2);
  RewardDimensions d;
  d.mse = Mse(y_hat, y);
  for (std::size_t i = 0; i < y.size(); ++i) d.mae += std::abs(y_hat[i] - y[i]);
  d.mae /= static_cast<double>(y.size());
  const auto p = SequenceMoments(y_hat, sigma_floor);
  const auto q = SequenceMoments(y, sigma_floor);
  d.kl = GaussianKl(p.mean, p.var, q.mean, q.var);
  d.r_mse = 1.0 / std::max(d.mse, eps_num);
  d.r_mae = 1.0 / std::max(d.mae, eps_num);
  d.r_kl = 1.0 / std::max(d.kl, eps_num);
  return d;
}

namespace {

double WeightedSum(const RewardDimensions& d, const RewardConfig& c) {
  return c.weights[0] * d.r_mse + c.weights[1] * d.r_mae + c.weights[2] * d.r_kl;
}

}  // namespace

double TanhScore(std::span<const double> y_hat, std::span<const double> y,
                 const RewardConfig& config) {
  const auto d = ComputeRewardDimensions(y_hat, y, config.eps_num, config.sigma_floor);
  return std::tanh(config.tau * WeightedSum(d, config));
}

RewardBreakdown Reward(std::span<const double> y_hat, std::span<const double> y,
                       std::span<const double> y_ref, const RewardConfig& config) {
  CheckPair(y_hat, y_ref, 2);
  RewardBreakdown r;
  r.dims = ComputeRewardDimensions(y_hat, y, config.eps_num, config.sigma_floor);
  r.weighted_sum = WeightedSum(r.dims, config);
  r.core = std::tanh(config.tau * r.weighted_sum);
  r.penalty = config.beta * Mse(y_hat, y_ref);
  r.total = r.core - r.penalty;
  return r;
}

double ValueEstimate(const std::vector<std::vector<double>>& predictions,
                     const std::vector<std::vector<double>>& truths, std::int64_t t,
                     const RewardConfig& config) {
  const auto m = static_cast<std::int64_t>(truths.size());
  if (predictions.size() != truths.size()) {
    throw PpoError("value estimate needs one prediction per target");
  }
  if (t < 0 || t > m) {
    throw PpoError("value index " + std::to_string(t) + " outside [0, " + std::to_string(m) + "]");
  }
  if (t == 0 || t == m) return 0.0;
  double v = 0.0;
  for (std::int64_t i = t; i < m; ++i) v += TanhScore(predictions[t - 1], truths[i], config);
  return v;
}

std::vector<double> GaeAdvantages(std::span<const double> rewards,
                                  std::span<const double> values, double gamma, double lambda,
                                  double xi) {
  if (values.size() != rewards.size() + 1) {
    throw PpoError("GAE needs one value per reward plus the terminal value, got " +
                   std::to_string(values.size()) + " values for " +
                   std::to_string(rewards.size()) + " rewards");
  }
  std::vector<double> adv(rewards.size());
  double running = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    const double delta = rewards[t] + gamma * values[t + 1] - xi * values[t];
    running = delta + gamma * lambda * running;
    adv[t] = running;
  }
  return adv;
}

std::vector<double> NormalizeAdvantages(std::span<const double> advantages) {
  if (advantages.empty()) return {};
  double mean = 0.0, var = 0.0;
  for (double a : advantages) mean += a;
  mean /= static_cast<double>(advantages.size());
  for (double a : advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(advantages.size());
  const double scale = 1.0 / (std::sqrt(var) + 1e-8);
  std::vector<double> out;
  for (double a : advantages) out.push_back((a - mean) * scale);
  return out;
}

double PolicyRatio(std::span<const double> y_new, std::span<const double> y_old,
                   double sigma_floor) {
  CheckPair(y_new, y_old, 2);
  const auto n = SequenceMoments(y_new, sigma_floor);
  const auto o = SequenceMoments(y_old, sigma_floor);
  const double d = n.mean - o.mean;
  // log N(mu_n; mu_n, var_n) - log N(mu_n; mu_o, var_o)
  const double log_ratio = -0.5 * std::log(n.var) + 0.5 * std::log(o.var) + d * d / (2.0 * o.var);
  return std::exp(log_ratio);
}

ClipTerms ClippedSurrogate(std::span<const double> ratios, std::span<const double> advantages,
                           double clip_eps) {
  CheckPair(ratios, advantages, 1);
  ClipTerms c;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double r = ratios[i];
    const double rc = std::min(std::max(r, 1.0 - clip_eps), 1.0 + clip_eps);
    c.surrogate += std::min(r * advantages[i], rc * advantages[i]);
    if (r < 1.0 - clip_eps || r > 1.0 + clip_eps) ++clipped;
  }
  c.surrogate /= static_cast<double>(ratios.size());
  c.clip_fraction = static_cast<double>(clipped) / static_cast<double>(ratios.size());
  return c;
}

double TimePpoObjective(std::span<const double> ratios, std::span<const double> advantages,
                        double prediction_loss, const PpoConfig& config) {
  return ClippedSurrogate(ratios, advantages, config.clip_eps).surrogate -
         config.eta * prediction_loss;
}

ad::Var PolicyRatio(ad::Graph& g, ad::Var y_new, const std::vector<Moments>& old,
                    double sigma_floor) {
  const auto& shape = g.shape(y_new);
  if (shape.size() != 2 || shape[0] != static_cast<std::int64_t>(old.size())) {
    throw PpoError("policy ratio expects [B, K] predictions with B old moments");
  }
  const std::int64_t b = shape[0], k = shape[1];
  std::vector<double> mu_old(old.size()), inv_two_var(old.size()), half_log_var(old.size());
  for (std::size_t i = 0; i < old.size(); ++i) {
    mu_old[i] = old[i].mean;
    inv_two_var[i] = 1.0 / (2.0 * old[i].var);
    half_log_var[i] = 0.5 * std::log(old[i].var);
  }
  ad::Var mean = g.MeanLastAxis(y_new);
  ad::Var centered = g.Sub(y_new, g.ExpandLast(mean, k));
  ad::Var var = g.ClampMin(g.MeanLastAxis(g.Square(centered)), sigma_floor * sigma_floor);
  ad::Var drift = g.Square(g.Sub(mean, g.Constant(ad::Tensor({b}, mu_old))));
  ad::Var log_ratio = g.Add(g.Scale(g.Log(var), -0.5), g.Constant(ad::Tensor({b}, half_log_var)));
  log_ratio = g.Add(log_ratio, g.Mul(drift, g.Constant(ad::Tensor({b}, inv_two_var))));
  return g.Exp(log_ratio);
}

ad::Var ClippedSurrogate(ad::Graph& g, ad::Var ratios, const std::vector<double>& advantages,
                         double clip_eps) {
  const auto n = static_cast<std::int64_t>(advantages.size());
  if (g.shape(ratios) != ad::Shape{n}) throw PpoError("one advantage per ratio is required");
  ad::Var a = g.Constant(ad::Tensor({n}, advantages));
  ad::Var plain = g.Mul(ratios, a);
  ad::Var clipped = g.Mul(g.Clip(ratios, 1.0 - clip_eps, 1.0 + clip_eps), a);
  return g.Minimum(plain, clipped);
}

}  // namespace langtime::ppo
