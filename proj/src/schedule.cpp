#include "vmc/schedule.hpp"

namespace vmc {

NoiseSchedule make_schedule_from_betas(std::vector<double> beta) {
    require_config(beta.size() >= 1, "schedule needs at least one step");
    NoiseSchedule s;
    s.T = static_cast<int>(beta.size());
    s.beta = Eigen::Map<Eigen::ArrayXd>(beta.data(), s.T);
    for (int i = 0; i < s.T; ++i)
        require_config(s.beta[i] >= 0.0 && s.beta[i] < 1.0,
                       "beta[" + std::to_string(i + 1) + "] outside [0, 1)");
    s.alpha = 1.0 - s.beta;
    s.alpha_bar.resize(s.T);
    double prod = 1.0;
    for (int i = 0; i < s.T; ++i) {
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    s.beta_tilde.resize(s.T);
    s.beta_tilde[0] = 0.0;  // no posterior noise at the last reverse step
    for (int i = 1; i < s.T; ++i)
        s.beta_tilde[i] =
            (1.0 - s.alpha_bar[i - 1]) / (1.0 - s.alpha_bar[i]) * s.beta[i];
    return s;
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    require_config(T >= 2, "linear schedule needs T >= 2");
    require_config(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
                   "linear schedule needs 0 < beta_start <= beta_end < 1");
    std::vector<double> beta(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i)
        beta[i] = beta_start + (beta_end - beta_start) * i / (T - 1);
    return make_schedule_from_betas(std::move(beta));
}

std::pair<double, double> residual_kernel_params(const NoiseSchedule& s, int t) {
    s.check_t(t);
    const double ab = s.alpha_bar_at(t);
    return {std::sqrt(ab), 2.0 * (1.0 - ab)};
}

}  // namespace vmc
