#include "beamlab/phase.hpp"

#include <Eigen/Eigenvalues>

namespace beamlab::phase {

VectorXcd PhaseJetData::grad() const {
    const int n = int(x.size());
    VectorXcd g(n);
    std::vector<int> e(n, 0);
    for (int j = 0; j < n; ++j) {
        e.assign(n, 0);
        e[j] = 1;
        g[j] = psi.coeff(e);
    }
    return g;
}

MatrixXcd PhaseJetData::hessian() const {
    const int n = int(x.size());
    MatrixXcd M(n, n);
    std::vector<int> e(n, 0);
    for (int j = 0; j < n; ++j)
        for (int k = j; k < n; ++k) {
            e.assign(n, 0);
            e[j] += 1;
            e[k] += 1;
            const cplx c = psi.coeff(e);
            M(j, k) = (j == k) ? 2.0 * c : c;
            M(k, j) = M(j, k);
        }
    return M;
}

PhaseJetSystem::PhaseJetSystem(const MetricPerturbation& p, int jet_order)
    : pert(&p), n(p.dim()), order(jet_order), sp(&JetSpace::get(p.dim(), jet_order)) {
    if (jet_order < 2) throw std::invalid_argument("phase jet order must be >= 2");
}

VectorXd PhaseJetSystem::initial_state(const PhasePoint& alpha) const {
    // φ(0,x,α) = (x-α_x)·α_ξ + (i/2)|x-α_x|² + (1/2i)|α_ξ|²
    Jet psi(*sp);
    psi.coeffs()[0] = cplx(0.0, -0.5) * alpha.xi.squaredNorm();
    std::vector<int> e(n, 0);
    for (int j = 0; j < n; ++j) {
        e.assign(n, 0);
        e[j] = 1;
        psi.set_coeff(e, alpha.xi[j]);
        e[j] = 2;
        psi.set_coeff(e, cplx(0.0, 0.5));
    }
    VectorXd y(state_size());
    y.head(n) = alpha.x;
    y.segment(n, n) = alpha.xi;
    const int sz = sp->size();
    for (int i = 0; i < sz; ++i) {
        y[2 * n + i] = psi.coeffs()[i].real();
        y[2 * n + sz + i] = psi.coeffs()[i].imag();
    }
    return y;
}

void PhaseJetSystem::unpack(double theta, const VectorXd& y, PhaseJetData& out) const {
    out.theta = theta;
    out.x = y.head(n);
    out.xi = y.segment(n, n);
    out.psi = Jet(*sp);
    const int sz = sp->size();
    for (int i = 0; i < sz; ++i) out.psi.coeffs()[i] = cplx(y[2 * n + i], y[2 * n + sz + i]);
}

Jet PhaseJetSystem::composed_symbol(const PhaseJetData& d) const {
    // p-jet around (x(θ), Re ∇ψ(0)) in 2n variables, composed with (u, ∇ψ(u)).
    VectorXcd grad0 = d.grad();
    VectorXd xi_base = grad0.real();
    Jet pj = pert->symbol_jet(d.x, xi_base, order);
    std::vector<Jet> inner;
    inner.reserve(2 * n);
    for (int j = 0; j < n; ++j) inner.push_back(Jet::coordinate(*sp, j, 0.0));
    for (int j = 0; j < n; ++j) inner.push_back(d.psi.derivative(j));
    VectorXcd base(2 * n);
    for (int j = 0; j < n; ++j) base[j] = 0.0;
    // expansion point of pj in the ξ-slots is the real part; the residual
    // imaginary drift of ∇ψ(0) rides along in (inner - base)
    for (int j = 0; j < n; ++j) base[n + j] = cplx(xi_base[j]);
    return jets::jet_compose(pj, inner, base);
}

void PhaseJetSystem::rhs(double theta, const VectorXd& y, VectorXd& dy) const {
    (void)theta;
    PhaseJetData d;
    unpack(theta, y, d);
    VectorXd gx(n), gxi(n);
    pert->grad_symbol(d.x, d.xi, gx, gxi);
    // dψ/dθ = ∇ψ·ẋ − jet[p(x+u, ∇ψ(u))]
    Jet dpsi(*sp);
    for (int j = 0; j < n; ++j) dpsi += cplx(gxi[j]) * d.psi.derivative(j);
    dpsi -= composed_symbol(d);
    dy.resize(y.size());
    dy.head(n) = gxi;
    dy.segment(n, n) = -gx;
    const int sz = sp->size();
    for (int i = 0; i < sz; ++i) {
        dy[2 * n + i] = dpsi.coeffs()[i].real();
        dy[2 * n + sz + i] = dpsi.coeffs()[i].imag();
    }
}

bool OmegaDomain::contains(double theta, const VectorXd& x, const VectorXd& ray_x) const {
    if ((x - ray_x).norm() > delta * jbrack(theta)) return false;
    if (label == flow::Classification::CaseII && theta < 0.0) {
        // extra half-space condition on the non-outgoing side
        if (x.dot(alpha.xi) < -c1 * jbrack(x) * alpha.xi.norm()) return false;
    }
    if (label == flow::Classification::CaseIII && theta > 0.0) {
        if (x.dot(alpha.xi) > c1 * jbrack(x) * alpha.xi.norm()) return false;
    }
    return true;
}

BeamPhase::BeamPhase(const MetricPerturbation& pert, const PhasePoint& alpha, double theta_lo,
                     double theta_hi, int jet_order, double tol, double delta, double c0, double c1)
    : sys_(pert, jet_order), alpha_(alpha), tol_(tol) {
    const double nxi = alpha.xi.norm();
    if (!(nxi >= 0.5 - 1e-12 && nxi <= 2.0 + 1e-12))
        throw std::invalid_argument("transport_phase_jet: need 1/2 <= |α_ξ| <= 2");
    if (!pert.certified())
        throw std::invalid_argument("transport_phase_jet: perturbation not certified");
    dom_.alpha = alpha;
    dom_.delta = delta;
    dom_.c0 = c0;
    dom_.c1 = c1;
    dom_.label = flow::classify_point(alpha, c0).domain_case;
    y0_ = sys_.initial_state(alpha);
    ode::Options opt;
    opt.rtol = tol;
    opt.atol = tol * 1e-2;
    auto rhs = [this](double t, const VectorXd& y, VectorXd& dy) { sys_.rhs(t, y, dy); };
    if (theta_hi > 0) {
        fwd_ = ode::integrate(rhs, 0.0, y0_, theta_hi, opt);
        if (!fwd_.ok) throw std::runtime_error("phase transport failed: " + fwd_.message);
    }
    if (theta_lo < 0) {
        bwd_ = ode::integrate(rhs, 0.0, y0_, theta_lo, opt);
        if (!bwd_.ok) throw std::runtime_error("phase transport failed: " + bwd_.message);
    }
    th_min_ = theta_lo < 0 ? theta_lo : 0.0;
    th_max_ = theta_hi > 0 ? theta_hi : 0.0;
    // positivity guard on Im M at a sample of θ
    double lo, hi;
    im_hessian_range(25, lo, hi);
    if (lo <= 0.0)
        throw std::runtime_error("phase transport: Im M lost positive definiteness along the ray");
}

PhaseJetData BeamPhase::at(double theta) const {
    if (theta < th_min_ - 1e-12 || theta > th_max_ + 1e-12)
        throw std::out_of_range("BeamPhase: θ outside transported span");
    PhaseJetData d;
    VectorXd y;
    if (theta > 1e-300 && !fwd_.steps.empty())
        y = fwd_.eval(theta);
    else if (theta < -1e-300 && !bwd_.steps.empty())
        y = bwd_.eval(theta);
    else
        y = y0_;
    sys_.unpack(theta, y, d);
    return d;
}

cplx BeamPhase::eval_phase(double theta, const VectorXd& x, bool unchecked) const {
    PhaseJetData d = at(theta);
    if (!unchecked && !dom_.contains(theta, x, d.x))
        throw std::domain_error("eval_phase: (θ,x) outside the beam's Ω_δ window");
    return d.psi.eval(VectorXcd((x - d.x).cast<cplx>()));
}

VectorXcd BeamPhase::eval_grad_phase(double theta, const VectorXd& x, bool unchecked) const {
    PhaseJetData d = at(theta);
    if (!unchecked && !dom_.contains(theta, x, d.x))
        throw std::domain_error("eval_grad_phase: (θ,x) outside the beam's Ω_δ window");
    VectorXcd u = (x - d.x).cast<cplx>();
    VectorXcd g(sys_.n);
    for (int j = 0; j < sys_.n; ++j) g[j] = d.psi.derivative(j).eval(u);
    return g;
}

double BeamPhase::eikonal_residual(double theta, const VectorXd& x, bool unchecked) const {
    PhaseJetData d = at(theta);
    if (!unchecked && !dom_.contains(theta, x, d.x))
        throw std::domain_error("eikonal_residual: (θ,x) outside the beam's Ω_δ window");
    // ∂_θφ(θ,x) = -jet[p∘](u), so the residual is p_exact(x,∇ψ(u)) - jet[p∘](u).
    VectorXcd u = (x - d.x).cast<cplx>();
    VectorXcd g(sys_.n);
    for (int j = 0; j < sys_.n; ++j) g[j] = d.psi.derivative(j).eval(u);
    const cplx pex = sys_.pert->eval_symbol(x, g);
    const cplx pjet = sys_.composed_symbol(d).eval(u);
    return std::abs(pex - pjet);
}

double BeamPhase::residual_slope(double theta, const VectorXd& dir, double r_lo, double r_hi,
                                 int samples) const {
    PhaseJetData d = at(theta);
    const double br = jbrack(theta);
    std::vector<double> lx, ly;
    for (int s = 0; s < samples; ++s) {
        const double r = r_lo * std::pow(r_hi / r_lo, double(s) / (samples - 1));
        VectorXd x = d.x + (r * br) * dir;
        const double res = eikonal_residual(theta, x, true);
        lx.push_back(std::log(r));
        ly.push_back(std::log(std::max(res, 1e-300)));
    }
    return fit_slope(lx, ly);
}

void BeamPhase::im_hessian_range(int samples, double& lo, double& hi) const {
    lo = 1e300;
    hi = -1e300;
    for (int i = 0; i <= samples; ++i) {
        const double th = th_min_ + (th_max_ - th_min_) * double(i) / samples;
        PhaseJetData d = at(th);
        MatrixXcd M = d.hessian();
        MatrixXd im = M.imag();
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (im + im.transpose()));
        const double f = 1.0 + 4.0 * th * th;
        lo = std::min(lo, es.eigenvalues().minCoeff() * f);
        hi = std::max(hi, es.eigenvalues().maxCoeff() * f);
    }
}

BeamPhase transport_phase_jet(const MetricPerturbation& pert, const PhasePoint& alpha,
                              double theta_lo, double theta_hi, int jet_order, double tol,
                              double delta, double c0, double c1) {
    return BeamPhase(pert, alpha, theta_lo, theta_hi, jet_order, tol, delta, c0, c1);
}

bool phase_domain(const OmegaDomain& dom, const BeamPhase& beam, double theta, const VectorXd& x) {
    return dom.contains(theta, x, beam.ray_x(theta));
}

ImPhaseReport check_imphase(const BeamPhase& beam, double theta_span, int samples, Rng& rng) {
    ImPhaseReport rep;
    rep.min_margin = 1e300;
    const int n = beam.dim();
    const PhasePoint& alpha = beam.seed();
    const double half_xi2 = 0.5 * alpha.xi.squaredNorm();
    const double eps = beam.pert().epsilon();
    const double delta = beam.domain().delta;
    const double denom_c = (eps + std::sqrt(delta));
    for (int s = 0; s < samples; ++s) {
        const double th = rng.uniform(std::max(-theta_span, beam.theta_min()),
                                      std::min(theta_span, beam.theta_max()));
        PhaseJetData d = beam.at(th);
        VectorXd u = rng.uniform(0.05, 1.0) * delta * jbrack(th) * rng.sphere(n);
        VectorXd x = d.x + u;
        if (!beam.domain().contains(th, x, d.x)) continue;
        const cplx ph = beam.eval_phase(th, x);
        const double u2 = u.squaredNorm();
        const double f = 1.0 + 4.0 * th * th;
        const double margin = ph.imag() - (0.25 * u2 / f - half_xi2);
        rep.min_margin = std::min(rep.min_margin, margin);
        const double dev = std::abs(ph.imag() + half_xi2 - 0.5 * u2 / f);
        const double denom = denom_c * u2 / (jbrack(th) * jbrack(th));
        if (denom > 1e-14) rep.two_sided_C = std::max(rep.two_sided_C, dev / denom);
        VectorXcd g = beam.eval_grad_phase(th, x);
        rep.max_grad_dev =
            std::max(rep.max_grad_dev, (g - alpha.xi.cast<cplx>()).norm());
        ++rep.samples;
    }
    return rep;
}

cplx free_phase(double theta, const VectorXd& x, const PhasePoint& alpha) {
    const cplx D(1.0, 2.0 * theta);
    VectorXd w = x - alpha.x;
    const cplx num = w.dot(alpha.xi) - theta * alpha.xi.squaredNorm() + cplx(0.0, 0.5) * w.squaredNorm();
    return num / D + cplx(0.0, -0.5) * alpha.xi.squaredNorm();
}

VectorXcd free_grad_phase(double theta, const VectorXd& x, const PhasePoint& alpha) {
    const cplx D(1.0, 2.0 * theta);
    VectorXcd g = (alpha.xi.cast<cplx>() + cplx(0.0, 1.0) * (x - alpha.x).cast<cplx>()) / D;
    return g;
}

cplx free_hessian_scalar(double theta) { return cplx(0.0, 1.0) / cplx(1.0, 2.0 * theta); }

PhaseJetData free_phase_jet(double theta, const PhasePoint& alpha, int order) {
    const int n = int(alpha.x.size());
    PhaseJetData d;
    d.theta = theta;
    d.x = alpha.x + 2.0 * theta * alpha.xi;
    d.xi = alpha.xi;
    d.psi = Jet(JetSpace::get(n, order));
    const double p0 = alpha.xi.squaredNorm();
    d.psi.coeffs()[0] = theta * p0 + cplx(0.0, -0.5) * p0;
    const cplx m = free_hessian_scalar(theta);
    std::vector<int> e(n, 0);
    for (int j = 0; j < n; ++j) {
        e.assign(n, 0);
        e[j] = 1;
        d.psi.set_coeff(e, alpha.xi[j]);
        e[j] = 2;
        d.psi.set_coeff(e, 0.5 * m);
    }
    return d;
}

}  // namespace beamlab::phase
