// Two-eigenvalue map at small eps: T(0) sharpens up to ~2 and y settles
// near -eps/2 while z̃ slowly decays.

#include <cstdio>

#include "eoslab/two_param.hpp"

using namespace eoslab;

int main() {
    const double eps = 0.005;
    const ReducedModel m = ReducedModel::from_eps(eps);
    const ReducedState s0{-0.2, 1.9};
    std::printf("eps = %g, start (z, T0) = (%g, %g)\n", eps, s0.z_tilde, s0.t0);
    std::printf("%8s %14s %10s %12s\n", "step", "z_tilde", "T0", "y");
    for (const auto& r : reduced_trajectory(m, s0, 9000, 500, 1e-10))
        std::printf("%8zu %14.6e %10.6f %12.6f\n", r.step, r.z_tilde, r.t0, r.y);

    std::printf("\nfinal y against -eps/2 and the low-order fixed point\n");
    std::printf("%8s %14s %14s %14s\n", "eps", "y_final", "-eps/2", "y_star");
    for (double e : {0.002, 0.01, 0.05}) {
        const ReducedModel me = ReducedModel::from_eps(e);
        const auto r = run_to_convergence(me, from_y(me, {0.1, 0.005}));
        std::printf("%8g %14.8f %14.8f %14.8f\n", e, r.y, -e / 2, y_star(e));
    }
}
