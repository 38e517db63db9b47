#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "vmc/errors.hpp"

namespace vmc {

/// Discrete noise schedule. Timesteps are 1-indexed; t=0 denotes clean data
/// by convention and is served by the accessors (alpha_bar_at(0) == 1).
/// All tables are derived from beta and recomputed on load, never stored.
/// Immutable after construction; safe for unrestricted concurrent reads.
struct NoiseSchedule {
    int T = 0;
    Eigen::ArrayXd beta;        // beta[t-1] for t in [1, T]
    Eigen::ArrayXd alpha;       // 1 - beta, exactly
    Eigen::ArrayXd alpha_bar;   // prefix product of alpha
    Eigen::ArrayXd beta_tilde;  // posterior variance; beta_tilde[0] (t=1) is 0

    bool valid_t(int t) const { return t >= 1 && t <= T; }

    void check_t(int t) const {
        require_config(valid_t(t), "timestep " + std::to_string(t) +
                                       " outside [1, " + std::to_string(T) + "]");
    }

    double beta_at(int t) const { check_t(t); return beta[t - 1]; }
    double alpha_at(int t) const { check_t(t); return alpha[t - 1]; }

    /// alpha_bar with the t=0 clean-data convention.
    double alpha_bar_at(int t) const {
        if (t == 0) return 1.0;
        check_t(t);
        return alpha_bar[t - 1];
    }

    double beta_tilde_at(int t) const { check_t(t); return beta_tilde[t - 1]; }
};

/// Builds the derived tables from a beta table. Degenerate beta values
/// (0 allowed) are accepted here; the linear constructor below enforces the
/// production range.
NoiseSchedule make_schedule_from_betas(std::vector<double> beta);

/// Linear beta interpolation over T steps. Requires T >= 2 and
/// 0 < beta_start <= beta_end < 1.
NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end);

/// Mean scale and per-coordinate variance of the consecutive-frame residual
/// at timestep t given the clean residual: (sqrt(alpha_bar_t), 2(1-alpha_bar_t)).
std::pair<double, double> residual_kernel_params(const NoiseSchedule& s, int t);

/// v_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps, elementwise.
/// Works on single frames (vectors) or whole videos (N x d matrices).
template <class D1, class D2>
typename D1::PlainObject forward_sample(const Eigen::MatrixBase<D1>& x0, int t,
                                        const Eigen::MatrixBase<D2>& eps,
                                        const NoiseSchedule& s) {
    require_shape(x0.rows() == eps.rows() && x0.cols() == eps.cols(),
                  "forward_sample: eps dimension does not match x0");
    const double ab = s.alpha_bar_at(t);
    s.check_t(t);
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

/// Score parameterization s_theta = -eps_pred / sqrt(1 - alpha_bar_t).
template <class D>
typename D::PlainObject score_from_epsilon(const Eigen::MatrixBase<D>& eps_pred,
                                           const NoiseSchedule& s, int t) {
    s.check_t(t);
    return (-1.0 / std::sqrt(1.0 - s.alpha_bar_at(t))) * eps_pred;
}

}  // namespace vmc
