#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace blockrg {

/// Deterministic random source: the mt19937_64 stream is fixed by the
/// standard, and all distributions below are explicit transforms of it, so a
/// seed fixes every draw bit-for-bit across platforms and thread counts.
class Rng {
  public:
    explicit Rng(uint64_t seed) : g_(seed) {}

    double uniform() {  // [0, 1)
        return static_cast<double>(g_() >> 11) * 0x1.0p-53;
    }
    double uniform_pm(double a) { return a * (2.0 * uniform() - 1.0); }
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(6.283185307179586476925287 * u2);
        have_spare_ = true;
        return r * std::cos(6.283185307179586476925287 * u2);
    }
    std::complex<double> cnormal() {
        double re = normal();
        return {re, normal()};
    }

  private:
    std::mt19937_64 g_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace blockrg
