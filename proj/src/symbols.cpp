#include "beamlab/symbols.hpp"

#include <algorithm>

namespace beamlab::symbols {

using jets::Jet;
using jets::JetSpace;

namespace {

/// sup over directions and a radial sweep of ⟨x⟩^{1+ℓ+σ0} Σ_{|α|=ℓ}|∂^α w_s(x)|,
/// evaluated through the jet algebra. Radii reach 1e4 so tail exponents register.
std::vector<double> shape_seminorms(int n, double s, double sigma0, int kmax, double rmax = 1e4) {
    std::vector<VectorXd> dirs;
    if (n == 1) {
        dirs.push_back(VectorXd::Constant(1, 1.0));
    } else {
        for (int a = 0; a < 16; ++a) {
            VectorXd d(2);
            d << std::cos(2 * pi * a / 16.0), std::sin(2 * pi * a / 16.0);
            dirs.push_back(d);
        }
    }
    std::vector<double> radii;
    radii.push_back(0.0);
    for (int i = 0; i <= 400; ++i) radii.push_back(1e-2 * std::pow(rmax / 1e-2, i / 400.0));
    std::vector<double> out(kmax + 1, 0.0);
    for (const auto& d : dirs)
        for (double r : radii) {
            VectorXd x = r * d;
            const double u0 = 1.0 + x.squaredNorm();
            const JetSpace& sp = JetSpace::get(n, kmax);
            // w-jet at x
            Jet u(sp);
            u.coeffs()[0] = u0;
            std::vector<int> e(n, 0);
            for (int j = 0; j < n; ++j) {
                e.assign(n, 0);
                e[j] = 1;
                u.set_coeff(e, 2.0 * x[j]);
                e[j] = 2;
                u.set_coeff(e, 1.0);
            }
            Jet w = jets::jet_compose(jets::power_jet(-s / 2.0, u0, kmax), {u}, VectorXcd::Constant(1, u0));
            std::vector<double> per_deg(kmax + 1, 0.0);
            for (int i = 0; i < sp.size(); ++i)
                per_deg[sp.deg[i]] += std::abs(w.coeffs()[i]) * sp.fact[i];
            const double br = jbrack(x);
            for (int l = 0; l <= kmax; ++l)
                out[l] = std::max(out[l], per_deg[l] * std::pow(br, 1.0 + l + sigma0));
        }
    return out;
}

}  // namespace

MetricPerturbation::MetricPerturbation(int n, double epsilon, MatrixXd amplitudes,
                                       double decay_exponent, DecayProfile profile,
                                       std::string family_name)
    : n_(n), eps_(epsilon), amps_(std::move(amplitudes)), s_(decay_exponent),
      profile_(std::move(profile)), family_(std::move(family_name)) {
    if (n_ != 1 && n_ != 2) throw std::invalid_argument("dimension must be 1 or 2 at desk scale");
    if (eps_ < 0.0) throw std::invalid_argument("epsilon must be >= 0");
    profile_.validate();
    if (amps_.rows() != n_ || amps_.cols() != n_) throw std::invalid_argument("amplitude matrix shape");
    if (!amps_.isApprox(amps_.transpose(), 1e-14))
        throw std::invalid_argument("coefficient matrix must be symmetric: b_jk = b_kj");
    // Sandwich condition 9/10 |ξ|² <= p <= 11/10 |ξ|² needs ε A_0 <= 1/10.
    if (eps_ * profile_.seminorms[0] > 0.1 + 1e-12)
        throw std::invalid_argument("epsilon inadmissible: need eps*A_0 <= 1/10 for the ellipticity sandwich");
}

double MetricPerturbation::shape(const VectorXd& x) const {
    return std::pow(1.0 + x.squaredNorm(), -s_ / 2.0);
}

Jet MetricPerturbation::shape_jet(const VectorXd& x, int order) const {
    const JetSpace& sp = JetSpace::get(n_, order);
    const double u0 = 1.0 + x.squaredNorm();
    Jet u(sp);
    u.coeffs()[0] = u0;
    std::vector<int> e(n_, 0);
    if (order >= 1)
        for (int j = 0; j < n_; ++j) {
            e.assign(n_, 0);
            e[j] = 1;
            u.set_coeff(e, 2.0 * x[j]);
            if (order >= 2) {
                e[j] = 2;
                u.set_coeff(e, 1.0);
            }
        }
    return jets::jet_compose(jets::power_jet(-s_ / 2.0, u0, order), {u}, VectorXcd::Constant(1, u0));
}

double MetricPerturbation::coeff(int j, int k, const VectorXd& x) const {
    const double a = amps_(j, k);
    return a == 0.0 ? 0.0 : a * shape(x);
}

MatrixXd MetricPerturbation::coeff_matrix(const VectorXd& x) const { return amps_ * shape(x); }

Jet MetricPerturbation::coeff_jet(int j, int k, const VectorXd& x, int order) const {
    if (order > profile_.kmax) throw std::invalid_argument("derivative order beyond certified kmax");
    Jet w = shape_jet(x, order);
    w *= cplx(amps_(j, k));
    return w;
}

double MetricPerturbation::eval_symbol(const VectorXd& x, const VectorXd& xi) const {
    double p = xi.squaredNorm();
    if (eps_ != 0.0) p += eps_ * shape(x) * xi.dot(amps_ * xi);
    return p;
}

cplx MetricPerturbation::eval_symbol(const VectorXd& x, const VectorXcd& xi) const {
    cplx p = xi.cwiseProduct(xi).sum();
    if (eps_ != 0.0) {
        cplx q = xi.transpose() * (amps_.cast<cplx>() * xi);
        p += eps_ * shape(x) * q;
    }
    return p;
}

void MetricPerturbation::grad_symbol(const VectorXd& x, const VectorXd& xi, VectorXd& gx,
                                     VectorXd& gxi) const {
    gxi = 2.0 * xi;
    gx = VectorXd::Zero(n_);
    if (eps_ == 0.0) return;
    const double w = shape(x);
    const double quad = xi.dot(amps_ * xi);
    // ∇w = -s x ⟨x⟩^{-s-2}
    const double u0 = 1.0 + x.squaredNorm();
    VectorXd gw = (-s_ * std::pow(u0, -s_ / 2.0 - 1.0)) * x;
    gx = eps_ * quad * gw;
    gxi += 2.0 * eps_ * w * (amps_ * xi);
}

void MetricPerturbation::hessian_blocks(const VectorXd& x, const VectorXd& xi, MatrixXd& pxx,
                                        MatrixXd& pxxi, MatrixXd& pxixi) const {
    pxixi = 2.0 * MatrixXd::Identity(n_, n_);
    pxx = MatrixXd::Zero(n_, n_);
    pxxi = MatrixXd::Zero(n_, n_);
    if (eps_ == 0.0) return;
    const double u0 = 1.0 + x.squaredNorm();
    const double w = std::pow(u0, -s_ / 2.0);
    const double w1 = -s_ * std::pow(u0, -s_ / 2.0 - 1.0);           // dw/du · 2 folded below
    const double w2 = s_ * (s_ + 2.0) * std::pow(u0, -s_ / 2.0 - 2.0);
    // ∂_a w = w1 x_a ;  ∂_a∂_b w = w2 x_a x_b + w1 δ_ab
    const double quad = xi.dot(amps_ * xi);
    VectorXd Cxi = amps_ * xi;
    for (int a = 0; a < n_; ++a) {
        for (int b = 0; b < n_; ++b) {
            const double dwdab = w2 * x[a] * x[b] + w1 * (a == b ? 1.0 : 0.0);
            pxx(a, b) = eps_ * quad * dwdab;
            pxxi(a, b) = 2.0 * eps_ * (w1 * x[a]) * Cxi[b];
        }
    }
    pxixi += 2.0 * eps_ * w * amps_;
}

Jet MetricPerturbation::symbol_jet(const VectorXd& x0, const VectorXd& xi0, int order) const {
    const JetSpace& sp = JetSpace::get(2 * n_, order);
    // ξ-coordinate jets occupy slots n..2n-1
    Jet p(sp);
    std::vector<Jet> xi(n_, Jet(sp));
    for (int j = 0; j < n_; ++j) xi[j] = Jet::coordinate(sp, n_ + j, xi0[j]);
    for (int j = 0; j < n_; ++j) p += jets::jet_multiply(xi[j], xi[j]);
    if (eps_ == 0.0) return p;
    // w-jet in the 2n-variable space (depends on x-slots only)
    const double u0 = 1.0 + x0.squaredNorm();
    Jet u(sp);
    u.coeffs()[0] = u0;
    std::vector<int> e(2 * n_, 0);
    if (order >= 1)
        for (int j = 0; j < n_; ++j) {
            e.assign(2 * n_, 0);
            e[j] = 1;
            u.set_coeff(e, 2.0 * x0[j]);
            if (order >= 2) {
                e[j] = 2;
                u.set_coeff(e, 1.0);
            }
        }
    Jet w = jets::jet_compose(jets::power_jet(-s_ / 2.0, u0, order), {u}, VectorXcd::Constant(1, u0));
    Jet q(sp);
    for (int j = 0; j < n_; ++j)
        for (int k = 0; k < n_; ++k) {
            if (amps_(j, k) == 0.0) continue;
            q += cplx(amps_(j, k)) * jets::jet_multiply(xi[j], xi[k]);
        }
    p += cplx(eps_) * jets::jet_multiply(w, q);
    return p;
}

VectorXd MetricPerturbation::div_coeff(const VectorXd& x) const {
    VectorXd out = VectorXd::Zero(n_);
    if (eps_ == 0.0) return out;
    const double u0 = 1.0 + x.squaredNorm();
    const double w1 = -s_ * std::pow(u0, -s_ / 2.0 - 1.0);
    for (int j = 0; j < n_; ++j) {
        double s = 0.0;
        for (int k = 0; k < n_; ++k) s += w1 * x[k] * amps_(k, j);
        out[j] = s;
    }
    return out;
}

Jet MetricPerturbation::div_coeff_jet(int j, const VectorXd& x, int order) const {
    Jet w = shape_jet(x, order + 1 > profile_.kmax ? order : order + 1);
    Jet out(JetSpace::get(n_, w.order()));
    for (int k = 0; k < n_; ++k)
        if (amps_(k, j) != 0.0) out += cplx(amps_(k, j)) * w.derivative(k);
    return out.truncated(order);
}

std::vector<VectorXd> default_certification_grid(int n, std::uint64_t seed) {
    std::vector<VectorXd> g;
    const int per_axis = n == 1 ? 81 : 41;
    if (n == 1) {
        for (int i = 0; i < per_axis; ++i)
            g.push_back(VectorXd::Constant(1, -20.0 + 40.0 * i / (per_axis - 1)));
    } else {
        for (int i = 0; i < per_axis; ++i)
            for (int j = 0; j < per_axis; ++j) {
                VectorXd x(2);
                x << -20.0 + 40.0 * i / (per_axis - 1), -20.0 + 40.0 * j / (per_axis - 1);
                g.push_back(x);
            }
    }
    Rng rng(seed);
    for (int k = 0; k < 200; ++k) {
        VectorXd d = rng.sphere(n);
        g.push_back(rng.uniform(0.0, 200.0) * d);
    }
    return g;
}

CertificationReport verify_decay(const MetricPerturbation& pert, const std::vector<VectorXd>& grid,
                                 int max_order) {
    if (grid.empty()) throw std::invalid_argument("verify_decay: grid is empty");
    if (max_order > pert.profile().kmax)
        throw std::invalid_argument("verify_decay: max_order beyond certified kmax");
    CertificationReport rep;
    const int n = pert.dim();
    const double sig = pert.profile().sigma0;
    rep.orders.resize(max_order + 1);
    for (int l = 0; l <= max_order; ++l) {
        rep.orders[l].order = l;
        rep.orders[l].bound = l < int(pert.profile().seminorms.size()) ? pert.profile().seminorms[l] : 0.0;
    }
    for (const auto& x : grid) {
        // one jet per (j,k) pair; the shape jet is shared
        std::vector<double> per_deg(max_order + 1, 0.0);
        const JetSpace& sp = JetSpace::get(n, max_order);
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                Jet b = pert.coeff_jet(j, k, x, max_order);
                for (int i = 0; i < sp.size(); ++i)
                    per_deg[sp.deg[i]] += std::abs(b.coeffs()[i]) * sp.fact[i];
            }
        const double br = jbrack(x);
        for (int l = 0; l <= max_order; ++l) {
            const double r = per_deg[l] * std::pow(br, 1.0 + l + sig);
            rep.orders[l].max_ratio = std::max(rep.orders[l].max_ratio, r);
        }
    }
    rep.decay_pass = true;
    for (auto& o : rep.orders) {
        o.pass = o.max_ratio <= o.bound * (1.0 + 1e-9) + 1e-300;
        rep.decay_pass = rep.decay_pass && o.pass;
    }
    // ellipticity sandwich on a coarser grid x unit sphere
    rep.sandwich_low = 1e300;
    rep.sandwich_high = -1e300;
    Rng rng(777);
    const int nx = pert.dim() == 1 ? 41 : 15;
    for (int i = 0; i < nx; ++i) {
        VectorXd x;
        if (pert.dim() == 1) {
            x = VectorXd::Constant(1, -20.0 + 40.0 * i / (nx - 1));
        } else {
            x = rng.uniform_vec(2, -20.0, 20.0);
        }
        for (int a = 0; a < 8; ++a) {
            VectorXd xi = rng.sphere(pert.dim());
            const double r = pert.eval_symbol(x, xi);
            rep.sandwich_low = std::min(rep.sandwich_low, r);
            rep.sandwich_high = std::max(rep.sandwich_high, r);
        }
    }
    rep.sandwich_pass = rep.sandwich_low >= 0.9 - 1e-12 && rep.sandwich_high <= 1.1 + 1e-12;
    return rep;
}

MetricPerturbation builtin_family(const std::string& name, int n, double epsilon, double sigma0,
                                  double amplitude) {
    const int kmax = 8;
    MatrixXd C = MatrixXd::Zero(n, n);
    double s = 1.0 + sigma0;
    DecayProfile prof;
    prof.sigma0 = sigma0;
    prof.kmax = kmax;

    if (name == "zero") {
        prof.seminorms.assign(kmax + 1, 0.0);
        MetricPerturbation p(n, epsilon, C, s, prof, name);
        p.set_certification(verify_decay(p, default_certification_grid(n), kmax));
        return p;
    }
    if (name == "isotropic-bump") {
        C = amplitude * MatrixXd::Identity(n, n);
    } else if (name == "anisotropic-bump") {
        C = amplitude * MatrixXd::Identity(n, n);
        for (int j = 0; j < n; ++j) C(j, j) = amplitude / double(1 + j);
    } else if (name == "off-diagonal-bump") {
        if (n != 2) throw std::invalid_argument("off-diagonal-bump needs n=2");
        C(0, 1) = C(1, 0) = 0.5 * amplitude;
    } else if (name == "slow-decay") {
        // decays like ⟨x⟩^{-1} only; declared constants are taken near the
        // origin, so certification must fail at far samples.
        C(0, 0) = amplitude;
        s = 1.0;
    } else {
        throw std::invalid_argument("unknown builtin family: " + name);
    }

    const double csum = C.cwiseAbs().sum();
    std::vector<double> base = shape_seminorms(n, s, sigma0, kmax, name == "slow-decay" ? 1.0 : 1e4);
    prof.seminorms.resize(kmax + 1);
    for (int l = 0; l <= kmax; ++l) prof.seminorms[l] = csum * base[l] * (1.0 + 1e-6);
    MetricPerturbation p(n, epsilon, C, s, prof, name);
    p.set_certification(verify_decay(p, default_certification_grid(n), kmax));
    return p;
}

}  // namespace beamlab::symbols
