// Gradient descent on a random D = 60, P = 120 quadratic model in rescaled
// coordinates (alpha = 1). The top NTK eigenvalue climbs toward 2.

#include <cstdio>

#include "eoslab/quad_model.hpp"

using namespace eoslab;

int main() {
    const InitSpec spec{60, 120, 0.45, std::sqrt(0.045), 1.0, seed_derivation(1, 0, 0)};
    const auto init = init_random(spec);
    GdRunOptions opt;
    opt.max_steps = 20000;
    opt.record_every = 250;
    const auto traj = run_gd_zj(init.state, init.model.q_tensor, opt);
    std::printf("%8s %14s %10s %10s\n", "step", "loss", "lambda1", "lambda2");
    for (const auto& r : traj.records)
        std::printf("%8zu %14.6e %10.6f %10.6f\n", r.step, r.loss, r.lambda1, r.lambda2);
    std::printf("verdict: %s\n", std::string(to_string(traj.verdict)).c_str());
}
