#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace beamlab {

using cplx = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

inline constexpr double pi = 3.14159265358979323846;

/// ⟨x⟩ = (1+|x|²)^{1/2}
inline double jbrack(double t) { return std::sqrt(1.0 + t * t); }
inline double jbrack(const VectorXd& x) { return std::sqrt(1.0 + x.squaredNorm()); }

/// C^∞ step h(t)=exp(-1/t) (t>0), S(t)=h(t)/(h(t)+h(1-t)).
/// S(t)=0 for t<=0, S(t)=1 for t>=1, strictly increasing in between.
inline double smooth_step(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double a = std::exp(-1.0 / t);
    const double b = std::exp(-1.0 / (1.0 - t));
    return a / (a + b);
}

/// Down-step in r: exactly 1 for r<=r1, exactly 0 for r>=r0 (r1<r0).
inline double smooth_down(double r, double r1, double r0) {
    if (r <= r1) return 1.0;
    if (r >= r0) return 0.0;
    return smooth_step((r0 - r) / (r0 - r1));
}

/// Up-step in r: exactly 0 for r<=r0, exactly 1 for r>=r1 (r0<r1).
inline double smooth_up(double r, double r0, double r1) {
    if (r <= r0) return 0.0;
    if (r >= r1) return 1.0;
    return smooth_step((r - r0) / (r1 - r0));
}

struct Rng {
    std::mt19937_64 eng;
    explicit Rng(std::uint64_t seed) : eng(seed) {}
    double uniform(double a, double b) {
        std::uniform_real_distribution<double> d(a, b);
        return d(eng);
    }
    double normal(double mu = 0.0, double sig = 1.0) {
        std::normal_distribution<double> d(mu, sig);
        return d(eng);
    }
    VectorXd uniform_vec(int n, double a, double b) {
        VectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = uniform(a, b);
        return v;
    }
    /// Uniform point on the unit sphere S^{n-1}.
    VectorXd sphere(int n) {
        VectorXd v(n);
        double r2 = 0.0;
        do {
            for (int i = 0; i < n; ++i) v[i] = normal();
            r2 = v.norm();
        } while (r2 < 1e-12);
        return v / r2;
    }
};

/// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_slope: need >=2 points");
    const double n = double(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double den = n * sxx - sx * sx;
    if (std::abs(den) < 1e-300) throw std::runtime_error("fit_slope: degenerate abscissae");
    return (n * sxy - sx * sy) / den;
}

}  // namespace beamlab
