#pragma once

#include <functional>
#include <limits>

#include "beamlab/common.hpp"

namespace beamlab::ode {

/// Dormand-Prince 5(4) with the classic 4th-order dense interpolant.
/// RHS signature: void f(double t, const VectorXd& y, VectorXd& dy).

struct Options {
    double rtol = 1e-10;
    double atol = 1e-12;
    double hmax = std::numeric_limits<double>::infinity();
    long max_steps = 4000000;
    bool store_dense = true;
};

struct DenseStep {
    double t0 = 0, h = 0;
    VectorXd r1, r2, r3, r4, r5;
    VectorXd eval(double t) const {
        const double th = (t - t0) / h;
        const double th1 = 1.0 - th;
        return r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
    }
};

struct Solution {
    double t_begin = 0, t_end = 0;
    VectorXd y_begin, y_end;
    std::vector<DenseStep> steps;  // ordered along integration direction
    long n_steps = 0, n_rejected = 0;
    bool ok = false;
    std::string message;

    bool forward() const { return t_end >= t_begin; }
    bool contains(double t) const {
        return forward() ? (t >= t_begin - 1e-12 && t <= t_end + 1e-12)
                         : (t <= t_begin + 1e-12 && t >= t_end - 1e-12);
    }
    VectorXd eval(double t) const {
        if (steps.empty()) throw std::runtime_error("ode: no dense output stored");
        if (!contains(t)) throw std::out_of_range("ode: time outside integrated span");
        // binary search over steps
        size_t lo = 0, hi = steps.size() - 1;
        const bool fwd = forward();
        while (lo < hi) {
            const size_t mid = (lo + hi) / 2;
            const double tend = steps[mid].t0 + steps[mid].h;
            if (fwd ? (t <= tend) : (t >= tend))
                hi = mid;
            else
                lo = mid + 1;
        }
        return steps[lo].eval(t);
    }
};

namespace detail {
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                        a75 = -2187.0 / 6784, a76 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
}  // namespace detail

/// Integrate from t0 to t1 (either direction). If `checkpoints` is nonempty it
/// must be sorted along the direction of integration; `on_checkpoint` is called
/// with the dense-output state at each one (steps are never clipped for them).
template <class F>
Solution integrate(F&& f, double t0, const VectorXd& y0, double t1, const Options& opt = {},
                   const std::vector<double>& checkpoints = {},
                   const std::function<void(double, const VectorXd&)>& on_checkpoint = {}) {
    using namespace detail;
    Solution sol;
    sol.t_begin = t0;
    sol.y_begin = y0;
    if (t1 == t0) {
        sol.t_end = t0;
        sol.y_end = y0;
        sol.ok = true;
        for (double tc : checkpoints)
            if (on_checkpoint) on_checkpoint(tc, y0);
        return sol;
    }
    const double dir = t1 > t0 ? 1.0 : -1.0;
    const long n = y0.size();
    VectorXd y = y0, k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n), yerr(n);
    f(t0, y, k1);
    double t = t0;
    // initial step from rhs magnitude
    double sc = 0.0;
    for (long i = 0; i < n; ++i) {
        const double s = std::abs(k1[i]) / (opt.atol + opt.rtol * std::abs(y[i]));
        sc = std::max(sc, s);
    }
    double h = dir * std::min({std::abs(t1 - t0), opt.hmax, sc > 0 ? 0.01 / sc : std::abs(t1 - t0)});
    if (h == 0.0) h = dir * 1e-6;

    size_t next_cp = 0;
    auto flush_checkpoints = [&](const DenseStep& ds) {
        if (!on_checkpoint) return;
        while (next_cp < checkpoints.size()) {
            const double tc = checkpoints[next_cp];
            const double tend = ds.t0 + ds.h;
            const double tol_cp = 1e-12 * std::max(1.0, std::abs(tend));
            const bool inside = dir > 0 ? (tc <= tend + tol_cp) : (tc >= tend - tol_cp);
            if (!inside) break;
            on_checkpoint(tc, ds.eval(tc));
            ++next_cp;
        }
    };

    while (dir * (t1 - t) > 1e-14 * std::max(1.0, std::abs(t))) {
        if (sol.n_steps + sol.n_rejected > opt.max_steps) {
            sol.message = "ode: step limit exceeded";
            sol.t_end = t;
            sol.y_end = y;
            return sol;
        }
        if (dir * (t + h - t1) > 0) h = t1 - t;
        if (std::abs(h) < 1e-15 * std::max(1.0, std::abs(t))) {
            sol.message = "ode: step size collapse";
            sol.t_end = t;
            sol.y_end = y;
            return sol;
        }
        ytmp = y + h * (a21 * k1);
        f(t + c2 * h, ytmp, k2);
        ytmp = y + h * (a31 * k1 + a32 * k2);
        f(t + c3 * h, ytmp, k3);
        ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
        f(t + c4 * h, ytmp, k4);
        ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        f(t + c5 * h, ytmp, k5);
        ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        f(t + h, ytmp, k6);
        ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
        f(t + h, ynew, k7);
        yerr = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        double err = 0.0;
        for (long i = 0; i < n; ++i) {
            const double scale = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            const double q = yerr[i] / scale;
            err += q * q;
        }
        err = std::sqrt(err / double(n));
        if (err <= 1.0) {
            DenseStep ds;
            const bool want_dense = opt.store_dense || on_checkpoint;
            if (want_dense) {
                ds.t0 = t;
                ds.h = h;
                ds.r1 = y;
                ds.r2 = ynew - y;
                ds.r3 = h * k1 - ds.r2;
                ds.r4 = ds.r2 - h * k7 - ds.r3;
                ds.r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
                flush_checkpoints(ds);
                if (opt.store_dense) sol.steps.push_back(std::move(ds));
            }
            t += h;
            y.swap(ynew);
            k1.swap(k7);  // FSAL
            ++sol.n_steps;
            const double fac = err > 1e-30 ? 0.9 * std::pow(err, -0.2) : 5.0;
            h *= std::clamp(fac, 0.2, 5.0);
            if (std::abs(h) > opt.hmax) h = dir * opt.hmax;
        } else {
            ++sol.n_rejected;
            const double fac = 0.9 * std::pow(err, -0.2);
            h *= std::clamp(fac, 0.1, 0.9);
            // k1 is still valid for the retry
        }
    }
    sol.t_end = t;
    sol.y_end = y;
    if (on_checkpoint)
        while (next_cp < checkpoints.size()) {
            const double tc = checkpoints[next_cp];
            if (std::abs(tc - t) <= 1e-9 * std::max(1.0, std::abs(t)))
                on_checkpoint(tc, y);
            ++next_cp;
        }
    sol.ok = true;
    return sol;
}

}  // namespace beamlab::ode
