#ifndef LANGTIME_PPO_OBJECTIVE_HPP_
#define LANGTIME_PPO_OBJECTIVE_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "langtime/autodiff/graph.hpp"

namespace langtime::ppo {

class PpoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RewardConfig {
  double tau = 0.1;
  // Weights of the MSE, MAE and KL dimensions.
  std::array<double, 3> weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  double beta = 0.01;
  // Floor of every reciprocal's denominator.
  double eps_num = 1e-8;
  // Floor of a sequence's standard deviation in the KL dimension.
  double sigma_floor = 1e-4;

  void Validate() const;
};

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double xi = 0.9;
  double clip_eps = 0.1;
  double eta = 1.0;
  std::int64_t inner_epochs = 4;
  double sigma_floor = 1e-4;
  // Standardize the batch's advantages before the update.
  bool normalize_advantages = true;

  void Validate() const;
};

// Mean and population variance, the variance floored at sigma_floor^2.
struct Moments {
  double mean = 0.0;
  double var = 0.0;
};
Moments SequenceMoments(std::span<const double> y, double sigma_floor);

// KL(P || Q) of two univariate Gaussians.
double GaussianKl(double mu_p, double var_p, double mu_q, double var_q);

struct RewardDimensions {
  double mse = 0.0;
  double mae = 0.0;
  // KL(moments of the prediction || moments of the truth).
  double kl = 0.0;
  double r_mse = 0.0;
  double r_mae = 0.0;
  double r_kl = 0.0;
};
RewardDimensions ComputeRewardDimensions(std::span<const double> y_hat,
                                         std::span<const double> y, double eps_num,
                                         double sigma_floor);

double Mse(std::span<const double> a, std::span<const double> b);

// tanh(tau * sum_i w_i R_i(y_hat, y)).
double TanhScore(std::span<const double> y_hat, std::span<const double> y,
                 const RewardConfig& config);

struct RewardBreakdown {
  RewardDimensions dims;
  double weighted_sum = 0.0;
  double core = 0.0;
  double penalty = 0.0;  // beta * MSE(y_hat, y_ref)
  double total = 0.0;    // core - penalty
};
RewardBreakdown Reward(std::span<const double> y_hat, std::span<const double> y,
                       std::span<const double> y_ref, const RewardConfig& config);

// Value of state x_t for a trajectory of m = truths.size() steps, where
// predictions[t] was made from x_t and scored against truths[t]. V(x_0) and
// the terminal V(x_m) are 0; otherwise the last prediction, predictions[t-1],
// is scored against every remaining target truths[t..m-1].
double ValueEstimate(const std::vector<std::vector<double>>& predictions,
                     const std::vector<std::vector<double>>& truths, std::int64_t t,
                     const RewardConfig& config);

// Advantages by backward recursion over
// delta_t = r_t + gamma V(x_{t+1}) - xi V(x_t); values has one more entry
// than rewards (the terminal state).
std::vector<double> GaeAdvantages(std::span<const double> rewards,
                                  std::span<const double> values, double gamma, double lambda,
                                  double xi);

// (a - mean) / (std + 1e-8) over the whole batch.
std::vector<double> NormalizeAdvantages(std::span<const double> advantages);

// Density of N(mean(y_new), var(y_new)) at its own mean over the density of
// N(mean(y_old), var(y_old)) at mean(y_new).
double PolicyRatio(std::span<const double> y_new, std::span<const double> y_old,
                   double sigma_floor);

struct ClipTerms {
  double surrogate = 0.0;      // mean of min(r A, clip(r) A)
  double clip_fraction = 0.0;  // share of r outside [1 - eps, 1 + eps]
};
ClipTerms ClippedSurrogate(std::span<const double> ratios, std::span<const double> advantages,
                           double clip_eps);

// Objective to maximize: surrogate - eta * prediction_loss.
double TimePpoObjective(std::span<const double> ratios, std::span<const double> advantages,
                        double prediction_loss, const PpoConfig& config);

// Graph forms. y_new is [B, K]; old statistics and advantages are constants.
ad::Var PolicyRatio(ad::Graph& g, ad::Var y_new, const std::vector<Moments>& old,
                    double sigma_floor);
ad::Var ClippedSurrogate(ad::Graph& g, ad::Var ratios, const std::vector<double>& advantages,
                         double clip_eps);

}  // namespace langtime::ppo

#endif  // LANGTIME_PPO_OBJECTIVE_HPP_
