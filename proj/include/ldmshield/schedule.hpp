#pragma once

#include <vector>

namespace ldms {

// Discrete linear beta schedule with alpha and alpha-bar tables.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
};

// beta_t = beta0 + (t / (T-1)) * (betaT - beta0), t in [0, T-1].
NoiseSchedule build_linear_schedule(int T, double beta0, double betaT);

inline NoiseSchedule default_schedule() { return build_linear_schedule(1000, 1e-4, 2e-2); }

}  // namespace ldms
