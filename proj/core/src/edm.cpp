#include "windscale/edm.hpp"

namespace windscale {

std::vector<double> karras_sigmas(const NoiseSchedule& s) {
    s.validate();
    const int N = s.n_steps;
    std::vector<double> out;
    out.reserve(std::size_t(N) + 1);
    if (N == 1) {
        out = {s.sigma_max, 0.0};
        return out;
    }
    const double a = std::pow(s.sigma_max, 1.0 / s.rho);
    const double b = std::pow(s.sigma_min, 1.0 / s.rho);
    for (int i = 0; i < N; ++i) {
        const double f = double(i) / double(N - 1);
        out.push_back(std::pow(a + f * (b - a), s.rho));
    }
    // endpoints exactly, pow roundtrip notwithstanding
    out.front() = s.sigma_max;
    out.back() = s.sigma_min;
    out.push_back(0.0);
    return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace windscale
