#pragma once

#include <stdexcept>

namespace distral {

/// KL and entropy regularization strengths, carried as the raw costs with
/// the mixing weight alpha = c_kl / (c_kl + c_ent) and inverse temperature
/// beta = 1 / (c_kl + c_ent) always derived on demand.
class RegularizationConfig {
 public:
  RegularizationConfig() : c_kl_(0.0), c_ent_(1.0) {}

  static RegularizationConfig from_costs(double c_kl, double c_ent) {
    if (c_kl < 0.0 || c_ent < 0.0) throw std::invalid_argument("regularization costs must be nonnegative");
    if (!(c_kl + c_ent > 0.0)) throw std::invalid_argument("c_kl + c_ent must be positive");
    RegularizationConfig cfg;
    cfg.c_kl_ = c_kl;
    cfg.c_ent_ = c_ent;
    return cfg;
  }

  /// c_kl = alpha / beta, c_ent = (1 - alpha) / beta.
  static RegularizationConfig from_alpha_beta(double alpha, double beta) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in [0,1]");
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
    return from_costs(alpha / beta, (1.0 - alpha) / beta);
  }

  double c_kl() const { return c_kl_; }
  double c_ent() const { return c_ent_; }
  double alpha() const { return c_kl_ / (c_kl_ + c_ent_); }
  double beta() const { return 1.0 / (c_kl_ + c_ent_); }

 private:
  double c_kl_;
  double c_ent_;
};

/// Probabilities are floored at this value inside logarithms.
inline constexpr double kLogProbFloor = 1e-12;

}  // namespace distral
