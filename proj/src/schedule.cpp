#include "ldmshield/schedule.hpp"

#include <stdexcept>

namespace ldms {

NoiseSchedule build_linear_schedule(int T, double beta0, double betaT) {
    if (T < 2) throw std::invalid_argument("schedule: T must be >= 2");
    if (!(beta0 > 0.0) || !(betaT < 1.0) || !(beta0 < betaT))
        throw std::invalid_argument("schedule: need 0 < beta0 < betaT < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        double b = beta0 + (static_cast<double>(t) / (T - 1)) * (betaT - beta0);
        s.beta[t] = b;
        s.alpha[t] = 1.0 - b;
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

}  // namespace ldms
