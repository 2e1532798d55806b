#include "beamlab/fbi.hpp"

namespace beamlab::fbi {

namespace {

double cn(int n) { return std::pow(2.0, -0.5 * n) * std::pow(pi, -0.75 * n); }

/// index window [i0, i1) of grid nodes along `axis` with |x - c| <= r
void axis_window(const SpatialGrid& g, int axis, double c, double r, long& i0, long& i1) {
    i0 = long(std::ceil((c - r - g.lo[axis]) / g.h(axis)));
    i1 = long(std::floor((c + r - g.lo[axis]) / g.h(axis))) + 1;
    i0 = std::max(i0, 0L);
    i1 = std::min(i1, long(g.shape[axis]));
    if (i1 < i0) i1 = i0;
}

}  // namespace

double SpatialField::wraparound_mass(double shell) const {
    double outer = 0.0, total = 0.0;
    for (long i = 0; i < v.size(); ++i) {
        const double m = std::norm(v[i]);
        total += m;
        VectorXd x = grid.point(i);
        bool edge = false;
        for (int a = 0; a < grid.n; ++a) {
            const double rel = (x[a] - grid.lo[a]) / grid.len[a];
            if (rel < shell || rel > 1.0 - shell) edge = true;
        }
        if (edge) outer += m;
    }
    return total > 0 ? outer / total : 0.0;
}

double FBIField::weighted_l2() const {
    if (!weighted) throw std::invalid_argument("weighted_l2 expects the weighted convention");
    return std::sqrt(v.squaredNorm() * grid.cell());
}

AlphaGrid make_alpha_grid(const SpatialGrid& g, double lambda, double xi_max, double density) {
    AlphaGrid ag;
    ag.n = g.n;
    const double hh = 1.0 / (density * std::sqrt(lambda));
    for (int a = 0; a < g.n; ++a) {
        ag.nx[a] = int(std::ceil(g.len[a] / hh));
        ag.xh[a] = g.len[a] / ag.nx[a];
        ag.xlo[a] = g.lo[a];
        ag.nxi[a] = int(std::ceil(2.0 * xi_max / hh));
        ag.xih[a] = 2.0 * xi_max / ag.nxi[a];
        ag.xilo[a] = -xi_max;
    }
    return ag;
}

FBIField fbi_forward(const SpatialField& u, double lambda, const AlphaGrid& ag) {
    if (!u.grid.resolves(lambda))
        throw std::invalid_argument("fbi_forward: grid does not resolve 1/sqrt(lambda)");
    const int n = u.grid.n;
    FBIField out(ag, lambda);
    const double pref = cn(n) * std::pow(lambda, 0.75 * n) * u.grid.cell();
    const double rwin = std::sqrt(80.0 / lambda);
    const long nxi = ag.size_xi();
    for (long ix = 0; ix < ag.size_x(); ++ix) {
        VectorXd axv = ag.ax(ix);
        long i0 = 0, i1 = 0, j0 = 0, j1 = 0;
        axis_window(u.grid, 0, axv[0], rwin, i0, i1);
        if (n == 2)
            axis_window(u.grid, 1, axv[1], rwin, j0, j1);
        else {
            j0 = 0;
            j1 = 1;
        }
        for (long ixi = 0; ixi < nxi; ++ixi) {
            VectorXd axiv = ag.axi(ixi);
            cplx s = 0.0;
            for (long i = i0; i < i1; ++i)
                for (long j = j0; j < j1; ++j) {
                    const long idx = n == 1 ? i : i * u.grid.shape[1] + j;
                    VectorXd y = u.grid.point(idx);
                    VectorXd w = y - axv;
                    const double ph = lambda * w.dot(axiv);
                    const double damp = 0.5 * lambda * w.squaredNorm();
                    s += std::exp(cplx(-damp, ph)) * u.v[idx];
                }
            out.v[out.idx(ix, ixi)] = pref * s;  // weighted convention
        }
    }
    return out;
}

SpatialField fbi_adjoint(const FBIField& vf, const SpatialGrid& og) {
    const int n = og.n;
    const double lambda = vf.lambda;
    if (!vf.weighted) throw std::invalid_argument("fbi_adjoint expects the weighted convention");
    SpatialField out(og);
    const double pref = cn(n) * std::pow(lambda, 0.75 * n) * vf.grid.cell();
    const double rwin = std::sqrt(80.0 / lambda);
    const long nxi = vf.grid.size_xi();
    // iterate over α_x, accumulate into nearby x (windowed both ways)
    for (long ix = 0; ix < vf.grid.size_x(); ++ix) {
        VectorXd axv = vf.grid.ax(ix);
        long i0 = 0, i1 = 0, j0 = 0, j1 = 0;
        axis_window(og, 0, axv[0], rwin, i0, i1);
        if (n == 2)
            axis_window(og, 1, axv[1], rwin, j0, j1);
        else {
            j0 = 0;
            j1 = 1;
        }
        for (long i = i0; i < i1; ++i)
            for (long j = j0; j < j1; ++j) {
                const long idx = n == 1 ? i : i * og.shape[1] + j;
                VectorXd x = og.point(idx);
                VectorXd w = x - axv;
                const double damp = 0.5 * lambda * w.squaredNorm();
                cplx s = 0.0;
                for (long ixi = 0; ixi < nxi; ++ixi) {
                    VectorXd axiv = vf.grid.axi(ixi);
                    const double ph = -lambda * w.dot(axiv);
                    s += std::exp(cplx(0.0, ph)) * vf.v[ix * nxi + ixi];
                }
                out.v[idx] += pref * std::exp(-damp) * s;
            }
    }
    return out;
}

double check_inversion(const SpatialField& u, double lambda, const AlphaGrid& ag) {
    FBIField w = fbi_forward(u, lambda, ag);
    SpatialField r = fbi_adjoint(w, u.grid);
    return std::sqrt((r.v - u.v).squaredNorm() / std::max(u.v.squaredNorm(), 1e-300));
}

FBIField fbi_forward_fourier(const SpatialField& u, double lambda, const AlphaGrid& ag) {
    // Tu(α) = c_n λ^{3n/4} (2π)^{-n} (2π/λ)^{n/2} ∫ e^{iσ·α_x - |λα_ξ+σ|²/(2λ)} û(σ) dσ
    // with û(σ) = ∫ e^{-iσy} u(y) dy realized by the discrete transform.
    const int n = u.grid.n;
    VectorXcd hat = u.v;
    fft::forward(hat, u.grid.shape[0], u.grid.n == 2 ? u.grid.shape[1] : 1);
    FBIField out(ag, lambda);
    const double pref = cn(n) * std::pow(lambda, 0.75 * n) * std::pow(2.0 * pi, -double(n)) *
                        std::pow(2.0 * pi / lambda, 0.5 * n) * u.grid.cell();
    // dσ cell of the discrete frequency grid
    double dsig = 1.0;
    for (int a = 0; a < n; ++a) dsig *= 2.0 * pi / u.grid.len[a];
    const long nxi = ag.size_xi();
    for (long ix = 0; ix < ag.size_x(); ++ix) {
        VectorXd axv = ag.ax(ix);
        for (long ixi = 0; ixi < nxi; ++ixi) {
            VectorXd axiv = ag.axi(ixi);
            cplx s = 0.0;
            for (long m = 0; m < hat.size(); ++m) {
                VectorXd sig(n);
                if (n == 1) {
                    sig[0] = u.grid.freq(0, m);
                } else {
                    sig[0] = u.grid.freq(0, m / u.grid.shape[1]);
                    sig[1] = u.grid.freq(1, m % u.grid.shape[1]);
                }
                const double damp = (lambda * axiv + sig).squaredNorm() / (2.0 * lambda);
                if (damp > 80.0) continue;
                // discrete û includes the grid offset phase
                const double ph = sig.dot(axv) - sig.dot(VectorXd(u.grid.point(0)));
                s += std::exp(cplx(-damp, ph)) * hat[m];
            }
            out.v[out.idx(ix, ixi)] = pref / u.grid.cell() * s * dsig * u.grid.cell();
        }
    }
    return out;
}

CutoffFamily make_cutoffs(const VectorXd& xi0, double delta1, double delta2, double delta,
                          double c0) {
    if (std::abs(xi0.norm() - 1.0) > 1e-12) throw std::invalid_argument("make_cutoffs: |ξ0| = 1");
    if (delta2 > 0.01 + 1e-15) throw std::invalid_argument("make_cutoffs: δ2 <= 1/100 required");
    if (delta1 <= 0 || delta <= 0) throw std::invalid_argument("make_cutoffs: positive scales");
    CutoffFamily c;
    c.xi0 = xi0;
    c.delta1 = delta1;
    c.delta2 = delta2;
    c.delta = delta;
    c.c0 = c0;
    return c;
}

SpatialField frequency_cutoff_apply(const std::function<double(const VectorXd&)>& psi,
                                    double lambda, const SpatialField& u) {
    SpatialField out = u;
    fft::forward(out.v, u.grid.shape[0], u.grid.n == 2 ? u.grid.shape[1] : 1);
    const int n = u.grid.n;
    for (long m = 0; m < out.v.size(); ++m) {
        VectorXd k(n);
        if (n == 1) {
            k[0] = u.grid.freq(0, m);
        } else {
            k[0] = u.grid.freq(0, m / u.grid.shape[1]);
            k[1] = u.grid.freq(1, m % u.grid.shape[1]);
        }
        out.v[m] *= psi(k / lambda);
    }
    fft::inverse(out.v, u.grid.shape[0], u.grid.n == 2 ? u.grid.shape[1] : 1);
    return out;
}

MismatchFit microlocal_mismatch(const CutoffFamily& cut, const std::vector<double>& lambdas,
                                double s0) {
    if (lambdas.size() < 4)
        throw std::invalid_argument("microlocal_mismatch: need at least 4 λ samples");
    if (s0 <= 0) s0 = cut.a - 5.0 * cut.delta2;
    const int n = int(cut.xi0.size());
    MismatchFit fit;
    for (double lam : lambdas) {
        // coherent state at frequency s0·λ·ξ0; FBI mass then sits at α_ξ = -s0·ξ0,
        // just outside supp ψ3, so (1-ψ3) passes it whole.
        SpatialGrid g = n == 1 ? SpatialGrid::line(-8.0, 16.0, int(std::ceil(16 * 7 * std::sqrt(lam))))
                               : SpatialGrid::plane(-4, 8, int(std::ceil(8 * 7 * std::sqrt(lam))), -4,
                                                    8, int(std::ceil(8 * 7 * std::sqrt(lam))));
        SpatialField u(g);
        for (long i = 0; i < g.size(); ++i) {
            VectorXd y = g.point(i);
            u.v[i] = std::exp(cplx(-0.5 * lam * y.squaredNorm(), lam * s0 * cut.xi0.dot(y)));
        }
        AlphaGrid ag = make_alpha_grid(g, lam, 2.5, 3.0);
        FBIField w = fbi_forward(u, lam, ag);
        FBIField w1 = w;
        const long nxi = ag.size_xi();
        for (long ix = 0; ix < ag.size_x(); ++ix)
            for (long ixi = 0; ixi < nxi; ++ixi)
                w1.v[ix * nxi + ixi] *= 1.0 - cut.psi3(ag.axi(ixi));
        SpatialField back = fbi_adjoint(w1, g);
        SpatialField filt = frequency_cutoff_apply([&](const VectorXd& k) { return cut.psi2(k); },
                                                   lam, back);
        fit.lambdas.push_back(lam);
        fit.ratios.push_back(filt.l2() / std::max(w.weighted_l2(), 1e-300));
    }
    std::vector<double> lx, ly;
    for (size_t i = 0; i < fit.lambdas.size(); ++i) {
        lx.push_back(fit.lambdas[i]);
        ly.push_back(std::log(std::max(fit.ratios[i], 1e-300)));
    }
    fit.slope = fit_slope(lx, ly);
    return fit;
}

}  // namespace beamlab::fbi
