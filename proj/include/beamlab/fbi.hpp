#pragma once

#include <array>

#include "beamlab/common.hpp"
#include "beamlab/fft.hpp"

namespace beamlab::fbi {

/// Uniform periodized grid on a box (1D or 2D, row-major).
struct SpatialGrid {
    int n = 1;
    std::array<int, 2> shape{1, 1};
    std::array<double, 2> lo{0, 0};
    std::array<double, 2> len{1, 1};

    static SpatialGrid line(double lo0, double len0, int n0) {
        SpatialGrid g;
        g.n = 1;
        g.shape = {n0, 1};
        g.lo = {lo0, 0};
        g.len = {len0, 1};
        return g;
    }
    static SpatialGrid plane(double lo0, double len0, int n0, double lo1, double len1, int n1) {
        SpatialGrid g;
        g.n = 2;
        g.shape = {n0, n1};
        g.lo = {lo0, lo1};
        g.len = {len0, len1};
        return g;
    }

    long size() const { return long(shape[0]) * (n == 2 ? shape[1] : 1); }
    double h(int axis) const { return len[axis] / shape[axis]; }
    double cell() const { return n == 1 ? h(0) : h(0) * h(1); }
    VectorXd point(long idx) const {
        VectorXd x(n);
        if (n == 1) {
            x[0] = lo[0] + h(0) * double(idx);
        } else {
            x[0] = lo[0] + h(0) * double(idx / shape[1]);
            x[1] = lo[1] + h(1) * double(idx % shape[1]);
        }
        return x;
    }
    /// frequency of FFT index m along an axis: 2π m̃ / L with m̃ wrapped to ±N/2
    double freq(int axis, long m) const {
        long nn = shape[axis];
        long mw = m <= nn / 2 ? m : m - nn;
        return 2.0 * pi * double(mw) / len[axis];
    }
    /// finest-scale resolution requirement: h resolves 1/sqrt(λ) by >= `nodes` nodes
    bool resolves(double lambda, double nodes = 6.0) const {
        for (int a = 0; a < n; ++a)
            if (h(a) > 1.0 / (nodes * std::sqrt(lambda))) return false;
        return true;
    }
};

struct SpatialField {
    SpatialGrid grid;
    VectorXcd v;

    SpatialField() = default;
    explicit SpatialField(const SpatialGrid& g) : grid(g), v(VectorXcd::Zero(g.size())) {}

    double l2() const { return std::sqrt(v.squaredNorm() * grid.cell()); }
    double linf() const { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }
    double l1() const { return v.cwiseAbs().sum() * grid.cell(); }
    double lr(double r) const {
        double s = 0;
        for (long i = 0; i < v.size(); ++i) s += std::pow(std::abs(v[i]), r);
        return std::pow(s * grid.cell(), 1.0 / r);
    }
    /// mass fraction carried by the outer shell of the box (wraparound monitor)
    double wraparound_mass(double shell = 0.1) const;
};

/// Rectangular product grid over α = (α_x, α_ξ).
struct AlphaGrid {
    int n = 1;
    std::array<int, 2> nx{1, 1}, nxi{1, 1};
    std::array<double, 2> xlo{0, 0}, xh{1, 1};
    std::array<double, 2> xilo{0, 0}, xih{1, 1};

    long size_x() const { return long(nx[0]) * (n == 2 ? nx[1] : 1); }
    long size_xi() const { return long(nxi[0]) * (n == 2 ? nxi[1] : 1); }
    long size() const { return size_x() * size_xi(); }
    VectorXd ax(long ix) const {
        VectorXd p(n);
        if (n == 1) {
            p[0] = xlo[0] + xh[0] * double(ix);
        } else {
            p[0] = xlo[0] + xh[0] * double(ix / nx[1]);
            p[1] = xlo[1] + xh[1] * double(ix % nx[1]);
        }
        return p;
    }
    VectorXd axi(long ixi) const {
        VectorXd p(n);
        if (n == 1) {
            p[0] = xilo[0] + xih[0] * double(ixi);
        } else {
            p[0] = xilo[0] + xih[0] * double(ixi / nxi[1]);
            p[1] = xilo[1] + xih[1] * double(ixi % nxi[1]);
        }
        return p;
    }
    double cell() const {
        double c = 1;
        for (int a = 0; a < n; ++a) c *= xh[a] * xih[a];
        return c;
    }
};

/// α-grid covering the spatial box with |α_ξ| <= xi_max, spacings ~ 1/(c√λ).
AlphaGrid make_alpha_grid(const SpatialGrid& g, double lambda, double xi_max = 3.0,
                          double density = 3.0);

/// Phase-space field v(α); values stored in the weighted convention
/// w(α) = e^{-λ|α_ξ|²/2} Tu(α) when `weighted` (the raw values overflow at
/// desk-scale λ|α_ξ|², so the flag is part of the type).
struct FBIField {
    AlphaGrid grid;
    double lambda = 1;
    VectorXcd v;
    bool weighted = true;

    FBIField() = default;
    FBIField(const AlphaGrid& g, double lam) : grid(g), lambda(lam), v(VectorXcd::Zero(g.size())) {}
    long idx(long ix, long ixi) const { return ix * grid.size_xi() + ixi; }
    double weighted_l2() const;
};

/// T u  (Eq-style c_n λ^{3n/4} ∫ e^{iλ(y-α_x)·α_ξ - λ/2|y-α_x|² (+λ/2|α_ξ|²)} u).
FBIField fbi_forward(const SpatialField& u, double lambda, const AlphaGrid& ag);
/// T* v on the given output grid (accepts weighted fields).
SpatialField fbi_adjoint(const FBIField& v, const SpatialGrid& out);
/// ‖T*Tu - u‖₂/‖u‖₂.
double check_inversion(const SpatialField& u, double lambda, const AlphaGrid& ag);

/// Fourier-side route of the forward transform (test oracle for the grid route).
FBIField fbi_forward_fourier(const SpatialField& u, double lambda, const AlphaGrid& ag);

/// ----------------------------------------------------------------------------
/// Microlocal cutoff family: space cutoffs χ, frequency cutoffs ψ, with exact
/// plateau / support intervals built from the canonical smooth step. sign = +1
/// selects the χ⁺ family (outgoing), -1 the mirrored χ⁻ family.
/// ----------------------------------------------------------------------------
struct CutoffFamily {
    VectorXd xi0;       // unit direction
    double delta1 = 0.015;
    double delta2 = 0.01;
    double delta = 1.0;  // χ5 window scale (Ω_δ-matching scale of the kernel)
    double c0 = 0.1;
    double a = 0.6, b = 1.9;

    double chi0(double s) const { return smooth_down(s, 0.75, 1.0); }
    double chi1(int sign, const VectorXd& x) const { return chi0(-sign * x.dot(xi0) / delta1); }
    double chi2(int sign, const VectorXd& x) const { return chi0(-sign * x.dot(xi0) / (2 * delta1)); }
    double chi3(int sign, const VectorXd& x) const { return chi0(-sign * x.dot(xi0) / (3 * delta1)); }
    /// χ4 ≡ 1 unless α is strongly one-sided; then a 5δ1 half-space cutoff.
    double chi4(int sign, const VectorXd& y, const VectorXd& alpha_x, const VectorXd& alpha_xi) const {
        if (std::abs(alpha_x.dot(alpha_xi)) <= 0.5 * c0 * jbrack(alpha_x) * alpha_xi.norm())
            return 1.0;
        return chi0(-sign * y.dot(xi0) / (5 * delta1));
    }
    double chi5(const VectorXd& y) const { return smooth_down(y.norm(), delta / 2, delta); }
    double chi6(const VectorXd& x) const { return smooth_down(x.norm(), 0.5, 1.0); }
    double chi6p(const VectorXd& beta_x) const {
        const double t = -beta_x.dot(xi0);
        return smooth_up(t, 3.4 * delta1, 3.5 * delta1) * smooth_down(t, 6.0 * delta1, 7.0 * delta1);
    }

    double ang_plus(const VectorXd& xi) const {  // |ξ/|ξ| - ξ0|
        const double r = xi.norm();
        return r < 1e-14 ? 2.0 : (xi / r - xi0).norm();
    }
    double ang_minus(const VectorXd& xi) const {  // |ξ/|ξ| + ξ0|
        const double r = xi.norm();
        return r < 1e-14 ? 2.0 : (xi / r + xi0).norm();
    }
    double psi0(const VectorXd& xi) const {
        return smooth_down(ang_plus(xi), delta2, 2 * delta2) *
               smooth_up(xi.norm(), delta2, 2 * delta2);
    }
    double psi1(const VectorXd& xi) const {
        const double r = xi.norm();
        return smooth_up(r, a - 2 * delta2, a - delta2) * smooth_down(r, b + delta2, b + 2 * delta2);
    }
    double psi2(const VectorXd& xi) const { return psi0(xi) * psi1(xi); }
    double shell_minus(const VectorXd& xi, double k) const {  // plateau at kδ2, support (k+1)δ2
        const double r = xi.norm();
        return smooth_down(ang_minus(xi), k * delta2, (k + 1) * delta2) *
               smooth_up(r, a - (k + 1) * delta2, a - k * delta2) *
               smooth_down(r, b + k * delta2, b + (k + 1) * delta2);
    }
    double psi3(const VectorXd& xi) const { return shell_minus(xi, 3.0); }
    double psi4(const VectorXd& xi) const { return shell_minus(xi, 5.0); }
    double psi5(const VectorXd& xi) const { return shell_minus(xi, 7.0); }
};

CutoffFamily make_cutoffs(const VectorXd& xi0, double delta1, double delta2, double delta = 1.0,
                          double c0 = 0.1);

/// Fourier multiplier u -> ψ(D/λ)u on the periodized grid.
SpatialField frequency_cutoff_apply(const std::function<double(const VectorXd&)>& psi,
                                    double lambda, const SpatialField& u);

struct MismatchFit {
    std::vector<double> lambdas, ratios;
    double slope = 0;  // of log(ratio) against λ
};

/// Lemma-style exponential smallness probe: for a fixed-shape coherent-state
/// family aligned with ξ0 (frequency s0·ξ0), fits log ‖ψ2(D/λ)T*[(1-ψ3)Tu]‖ /
/// ‖Tu‖_w against λ.
MismatchFit microlocal_mismatch(const CutoffFamily& cut, const std::vector<double>& lambdas,
                                double s0 = -1.0);

}  // namespace beamlab::fbi
