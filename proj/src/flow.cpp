#include "beamlab/flow.hpp"

namespace beamlab::flow {

namespace {

struct FlowRhs {
    const MetricPerturbation* pert;
    int n;
    void operator()(double, const VectorXd& y, VectorXd& dy) const {
        VectorXd x = y.head(n), xi = y.tail(n), gx(n), gxi(n);
        pert->grad_symbol(x, xi, gx, gxi);
        dy.resize(2 * n);
        dy.head(n) = gxi;
        dy.tail(n) = -gx;
    }
};

// augmented: (x, ξ, M columns) with M' = S M, S = [[p_ξx, p_ξξ],[-p_xx, -p_xξ]]
struct VariationalRhs {
    const MetricPerturbation* pert;
    int n;
    void operator()(double, const VectorXd& y, VectorXd& dy) const {
        VectorXd x = y.head(n), xi = y.segment(n, n), gx(n), gxi(n);
        pert->grad_symbol(x, xi, gx, gxi);
        MatrixXd pxx, pxxi, pxixi;
        pert->hessian_blocks(x, xi, pxx, pxxi, pxixi);
        dy.resize(y.size());
        dy.head(n) = gxi;
        dy.segment(n, n) = -gx;
        MatrixXd S(2 * n, 2 * n);
        S.topLeftCorner(n, n) = pxxi.transpose();  // ∂(ẋ)/∂x = p_ξx = (p_xξ)ᵀ
        S.topRightCorner(n, n) = pxixi;
        S.bottomLeftCorner(n, n) = -pxx;
        S.bottomRightCorner(n, n) = -pxxi;
        Eigen::Map<const MatrixXd> M(y.data() + 2 * n, 2 * n, 2 * n);
        Eigen::Map<MatrixXd> dM(dy.data() + 2 * n, 2 * n, 2 * n);
        dM = S * M;
    }
};

ode::Options flow_opts(double tol) {
    ode::Options o;
    o.rtol = tol;
    o.atol = tol * 1e-2;
    return o;
}

}  // namespace

Trajectory::Trajectory(const MetricPerturbation* pert, PhasePoint alpha, ode::Solution fwd,
                       ode::Solution bwd, double tol)
    : pert_(pert), alpha_(std::move(alpha)), fwd_(std::move(fwd)), bwd_(std::move(bwd)), tol_(tol) {
    n_ = int(alpha_.x.size());
    p0_ = pert_->eval_symbol(alpha_.x, alpha_.xi);
    t_min_ = bwd_.steps.empty() ? 0.0 : bwd_.t_end;
    t_max_ = fwd_.steps.empty() ? 0.0 : fwd_.t_end;
}

void Trajectory::eval(double t, VectorXd& x, VectorXd& xi) const {
    VectorXd y;
    if (t > 1e-300) {
        y = fwd_.steps.empty() ? fwd_.y_begin : fwd_.eval(t);
    } else if (t < -1e-300) {
        y = bwd_.steps.empty() ? bwd_.y_begin : bwd_.eval(t);
    } else {
        x = alpha_.x;
        xi = alpha_.xi;
        return;
    }
    x = y.head(n_);
    xi = y.tail(n_);
}

PhasePoint Trajectory::at(double t) const {
    VectorXd x, xi;
    eval(t, x, xi);
    return PhasePoint(x, xi);
}

double Trajectory::energy_drift(double t) const {
    VectorXd x, xi;
    eval(t, x, xi);
    return std::abs(pert_->eval_symbol(x, xi) - p0_);
}

Trajectory integrate_flow(const MetricPerturbation& pert, const PhasePoint& alpha, double t_lo,
                          double t_hi, double tol) {
    if (!pert.certified()) throw std::invalid_argument("integrate_flow: perturbation not certified");
    if (!(tol >= 1e-12 && tol <= 1e-6)) throw std::invalid_argument("integrate_flow: tol out of range");
    const int n = int(alpha.x.size());
    FlowRhs rhs{&pert, n};
    VectorXd y0(2 * n);
    y0 << alpha.x, alpha.xi;
    ode::Solution fwd, bwd;
    if (t_hi > 0) {
        fwd = ode::integrate(rhs, 0.0, y0, t_hi, flow_opts(tol));
        if (!fwd.ok) throw std::runtime_error("integrate_flow: " + fwd.message);
    }
    if (t_lo < 0) {
        bwd = ode::integrate(rhs, 0.0, y0, t_lo, flow_opts(tol));
        if (!bwd.ok) throw std::runtime_error("integrate_flow: " + bwd.message);
    }
    return Trajectory(&pert, alpha, std::move(fwd), std::move(bwd), tol);
}

double JacobianBlocks::symplectic_residual() const {
    const int n = int(dx_dx.rows());
    MatrixXd M = full();
    MatrixXd J = MatrixXd::Zero(2 * n, 2 * n);
    J.topRightCorner(n, n) = MatrixXd::Identity(n, n);
    J.bottomLeftCorner(n, n) = -MatrixXd::Identity(n, n);
    return (M.transpose() * J * M - J).cwiseAbs().maxCoeff();
}

MatrixXd JacobianBlocks::reversal_inverse() const {
    const int n = int(dx_dx.rows());
    MatrixXd A(2 * n, 2 * n);
    A.topLeftCorner(n, n) = dxi_dxi.transpose();
    A.topRightCorner(n, n) = -dx_dxi.transpose();
    A.bottomLeftCorner(n, n) = -dxi_dx.transpose();
    A.bottomRightCorner(n, n) = dx_dx.transpose();
    return A;
}

VariationalTrajectory::VariationalTrajectory(const MetricPerturbation& pert,
                                             const PhasePoint& alpha, double t_lo, double t_hi,
                                             double tol)
    : n_(int(alpha.x.size())), alpha_(alpha) {
    VariationalRhs rhs{&pert, n_};
    VectorXd y0(2 * n_ + 4 * n_ * n_);
    y0.head(2 * n_) << alpha.x, alpha.xi;
    Eigen::Map<MatrixXd>(y0.data() + 2 * n_, 2 * n_, 2 * n_) = MatrixXd::Identity(2 * n_, 2 * n_);
    if (t_hi > 0) {
        fwd_ = ode::integrate(rhs, 0.0, y0, t_hi, flow_opts(tol));
        if (!fwd_.ok) throw std::runtime_error("variational flow: " + fwd_.message);
    }
    if (t_lo < 0) {
        bwd_ = ode::integrate(rhs, 0.0, y0, t_lo, flow_opts(tol));
        if (!bwd_.ok) throw std::runtime_error("variational flow: " + bwd_.message);
    }
}

void VariationalTrajectory::eval(double t, VectorXd& x, VectorXd& xi, JacobianBlocks& J) const {
    VectorXd y;
    if (t > 1e-300 && !fwd_.steps.empty())
        y = fwd_.eval(t);
    else if (t < -1e-300 && !bwd_.steps.empty())
        y = bwd_.eval(t);
    else {
        y.resize(2 * n_ + 4 * n_ * n_);
        y.head(2 * n_) << alpha_.x, alpha_.xi;
        Eigen::Map<MatrixXd>(y.data() + 2 * n_, 2 * n_, 2 * n_) =
            MatrixXd::Identity(2 * n_, 2 * n_);
    }
    x = y.head(n_);
    xi = y.segment(n_, n_);
    Eigen::Map<const MatrixXd> M(y.data() + 2 * n_, 2 * n_, 2 * n_);
    J.dx_dx = M.topLeftCorner(n_, n_);
    J.dx_dxi = M.topRightCorner(n_, n_);
    J.dxi_dx = M.bottomLeftCorner(n_, n_);
    J.dxi_dxi = M.bottomRightCorner(n_, n_);
}

JacobianBlocks VariationalTrajectory::blocks(double t) const {
    VectorXd x, xi;
    JacobianBlocks J;
    eval(t, x, xi, J);
    return J;
}

PhasePoint VariationalTrajectory::at(double t) const {
    VectorXd x, xi;
    JacobianBlocks J;
    eval(t, x, xi, J);
    return PhasePoint(x, xi);
}

JacobianBlocks variational_jacobian(const MetricPerturbation& pert, const PhasePoint& alpha,
                                    double t, double tol) {
    VariationalTrajectory vt(pert, alpha, std::min(t, 0.0), std::max(t, 0.0), tol);
    return vt.blocks(t);
}

ClassifyResult classify_point(const PhasePoint& alpha, double c0) {
    if (!(c0 > 0.0 && c0 <= 0.25)) throw std::invalid_argument("classify_point: c0 in (0, 1/4]");
    const double nxi = alpha.xi.norm();
    if (nxi == 0.0) throw std::invalid_argument("classify_point: |α_ξ| = 0");
    const double dot = alpha.x.dot(alpha.xi);
    const double scale = jbrack(alpha.x) * nxi;
    ClassifyResult r;
    r.in_S_plus = dot >= -0.25 * scale;
    r.in_S_minus = dot <= 0.25 * scale;
    r.s_membership = r.in_S_plus && r.in_S_minus ? Classification::OutgoingBoth
                     : r.in_S_plus               ? Classification::OutgoingForward
                                                 : Classification::OutgoingBackward;
    if (std::abs(dot) <= c0 * scale)
        r.domain_case = Classification::OutgoingBoth;
    else
        r.domain_case = dot > 0 ? Classification::CaseII : Classification::CaseIII;
    return r;
}

OutgoingDecomposition outgoing_decomposition(const MetricPerturbation& pert,
                                             const PhasePoint& alpha, double t_span, bool forward,
                                             int samples, double tol) {
    const double nxi = alpha.xi.norm();
    if (!(nxi >= 0.5 && nxi <= 2.0))
        throw std::invalid_argument("outgoing_decomposition: need 1/2 <= |α_ξ| <= 2");
    ClassifyResult c = classify_point(alpha, 0.1);
    if (forward && !c.in_S_plus)
        throw std::invalid_argument("outgoing_decomposition: seed not outgoing for t >= 0");
    if (!forward && !c.in_S_minus)
        throw std::invalid_argument("outgoing_decomposition: seed not outgoing for t <= 0");
    const double t1 = forward ? t_span : -t_span;
    Trajectory traj = integrate_flow(pert, alpha, std::min(0.0, t1), std::max(0.0, t1), tol);
    OutgoingDecomposition out;
    out.bound = (2e2 / pert.profile().sigma0) * pert.epsilon() * pert.max_a01();
    const double base = 1.0 + alpha.x.squaredNorm();
    out.sandwich_min = 1e300;
    out.sandwich_max = -1e300;
    for (int i = 0; i <= samples; ++i) {
        const double t = t1 * double(i) / samples;
        VectorXd x, xi;
        traj.eval(t, x, xi);
        VectorXd z = x - alpha.x - 2.0 * t * xi;
        VectorXd zeta = xi - alpha.xi;
        out.times.push_back(t);
        out.z.push_back(z);
        out.zeta.push_back(zeta);
        out.max_z = std::max(out.max_z, z.cwiseAbs().maxCoeff());
        out.max_zeta = std::max(out.max_zeta, zeta.cwiseAbs().maxCoeff());
        const double ratio = (1.0 + x.squaredNorm()) / (base + t * t);
        out.sandwich_min = std::min(out.sandwich_min, ratio);
        out.sandwich_max = std::max(out.sandwich_max, ratio);
    }
    out.bounds_pass = out.max_z <= out.bound + 1e-12 && out.max_zeta <= out.bound + 1e-12;
    out.sandwich_pass = out.sandwich_min >= 1.0 / 3.0 - 1e-9 && out.sandwich_max <= 40.0 + 1e-9;
    return out;
}

std::vector<DerivativeDecayEntry> derivative_decay_probe(const MetricPerturbation& pert,
                                                         const PhasePoint& alpha, double t,
                                                         int max_order, double tol) {
    ClassifyResult c = classify_point(alpha, 0.1);
    if (t >= 0 && !c.in_S_plus)
        throw std::invalid_argument("derivative_decay_probe: seed not outgoing for this sign");
    if (t < 0 && !c.in_S_minus)
        throw std::invalid_argument("derivative_decay_probe: seed not outgoing for this sign");
    const int n = int(alpha.x.size());
    const double eps = std::max(pert.epsilon(), 1e-300);
    const double sig = pert.profile().sigma0;
    const double wx = jbrack(alpha.x);

    // z(t;x,ξ) = x(t) - x - 2tξ(t): ∂z/∂x = ∂x/∂x - I - 2t ∂ξ/∂x, etc.
    auto z_jac = [&](const PhasePoint& a) {
        JacobianBlocks J = variational_jacobian(pert, a, t, tol);
        MatrixXd zx = J.dx_dx - MatrixXd::Identity(n, n) - 2.0 * t * J.dxi_dx;
        MatrixXd zxi = J.dx_dxi - 2.0 * t * J.dxi_dxi;
        MatrixXd zetax = J.dxi_dx;
        MatrixXd zetaxi = J.dxi_dxi - MatrixXd::Identity(n, n);
        return std::array<MatrixXd, 4>{zx, zxi, zetax, zetaxi};
    };

    std::vector<DerivativeDecayEntry> out;
    auto blocks0 = z_jac(alpha);
    {
        DerivativeDecayEntry e{1, 0, 0, 0};
        e.z_ratio = blocks0[0].cwiseAbs().maxCoeff() * std::pow(wx, 1.0 + sig) / eps;
        e.zeta_ratio = blocks0[2].cwiseAbs().maxCoeff() * std::pow(wx, 2.0 + sig) / eps;
        out.push_back(e);
        DerivativeDecayEntry e2{0, 1, 0, 0};
        e2.z_ratio = blocks0[1].cwiseAbs().maxCoeff() * std::pow(wx, sig) / eps;
        e2.zeta_ratio = blocks0[3].cwiseAbs().maxCoeff() * std::pow(wx, 1.0 + sig) / eps;
        out.push_back(e2);
    }
    if (max_order >= 2) {
        // central differences of the first-order Jacobians in x_0 and ξ_0
        const double h = 1e-4 * std::max(1.0, alpha.x.norm());
        for (int which = 0; which < 2; ++which) {
            PhasePoint ap = alpha, am = alpha;
            if (which == 0) {
                ap.x[0] += h;
                am.x[0] -= h;
            } else {
                ap.xi[0] += h;
                am.xi[0] -= h;
            }
            auto bp = z_jac(ap), bm = z_jac(am);
            DerivativeDecayEntry e{which == 0 ? 2 : 1, which == 0 ? 0 : 1, 0, 0};
            const double dz = ((bp[0] - bm[0]) / (2 * h)).cwiseAbs().maxCoeff();
            const double dzeta = ((bp[2] - bm[2]) / (2 * h)).cwiseAbs().maxCoeff();
            const int axd = which == 0 ? 2 : 1;
            e.z_ratio = dz * std::pow(wx, axd + sig) / eps;
            e.zeta_ratio = dzeta * std::pow(wx, 1.0 + axd + sig) / eps;
            out.push_back(e);
        }
    }
    return out;
}

double crossing_time(const MetricPerturbation& pert, const PhasePoint& alpha, double tol,
                     double c0, double t_max) {
    const double nxi = alpha.xi.norm();
    if (!(alpha.x.dot(alpha.xi) < -c0 * jbrack(alpha.x) * nxi))
        throw std::invalid_argument("crossing_time: seed must satisfy α_x·α_ξ < -c0⟨α_x⟩|α_ξ|");
    FlowRhs rhs{&pert, int(alpha.x.size())};
    (void)rhs;
    // g(s) = x(s,α)·α_ξ is strictly increasing along these seeds
    Trajectory traj = integrate_flow(pert, alpha, 0.0, 1.0, 1e-10);
    auto g = [&](double s) {
        Trajectory tr = integrate_flow(pert, alpha, 0.0, std::max(s, 1e-12), 1e-11);
        VectorXd x, xi;
        tr.eval(s, x, xi);
        return x.dot(alpha.xi);
    };
    // bracket by doubling
    double lo = 0.0, glo = alpha.x.dot(alpha.xi);
    double hi = std::max(1.0, -glo / (nxi * nxi));
    double ghi = g(hi);
    int guard = 0;
    while (ghi < 0.0) {
        lo = hi;
        glo = ghi;
        hi *= 2.0;
        if (hi > t_max || ++guard > 60)
            throw std::runtime_error("crossing_time: no sign change before t_max (trapping or bad seed)");
        ghi = g(hi);
    }
    // one dense trajectory over the bracket, then bisection on dense output
    Trajectory tr = integrate_flow(pert, alpha, 0.0, hi * 1.0000001, 1e-11);
    auto gd = [&](double s) {
        VectorXd x, xi;
        tr.eval(s, x, xi);
        return x.dot(alpha.xi);
    };
    for (int it = 0; it < 200 && (hi - lo) > 1e-15 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = gd(mid);
        if (std::abs(gm) <= 0.25 * tol * nxi && (hi - lo) < 1e-6 * std::max(1.0, hi)) return mid;
        if (gm < 0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

NontrappingResult nontrapping_probe(const MetricPerturbation& pert, const PhasePoint& seed,
                                    double t_max, double r_escape, double tol) {
    NontrappingResult res;
    for (int dir = 0; dir < 2; ++dir) {
        const double t1 = dir == 0 ? t_max : -t_max;
        Trajectory tr = integrate_flow(pert, seed, std::min(0.0, t1), std::max(0.0, t1), tol);
        double esc = -1.0;
        const int m = 4000;
        for (int i = 1; i <= m; ++i) {
            const double t = t1 * double(i) / m;
            VectorXd x, xi;
            tr.eval(t, x, xi);
            if (x.norm() > r_escape) {
                esc = std::abs(t);
                break;
            }
        }
        if (dir == 0)
            res.escape_fwd = esc;
        else
            res.escape_bwd = esc;
    }
    res.trapped = res.escape_fwd < 0 || res.escape_bwd < 0;
    return res;
}

ShortTimeReport short_time_probe(const MetricPerturbation& pert, const PhasePoint& alpha, double T,
                                 double tol) {
    if (alpha.xi.norm() > 3.0) throw std::invalid_argument("short_time_probe: need |ξ| <= 3");
    const int n = int(alpha.x.size());
    const double eps = std::max(pert.epsilon(), 1e-300);
    VariationalTrajectory vt(pert, alpha, -T, T, tol);
    ShortTimeReport rep;
    const int m = 40;
    for (int i = -m; i <= m; ++i) {
        const double t = T * double(i) / m;
        if (i == 0) continue;
        VectorXd x, xi;
        JacobianBlocks J;
        vt.eval(t, x, xi, J);
        VectorXd r = x - alpha.x - 2.0 * t * alpha.xi;
        VectorXd zeta = xi - alpha.xi;
        rep.max_r_over_eps_t = std::max(rep.max_r_over_eps_t, r.norm() / (eps * std::abs(t)));
        rep.max_zeta_over_eps_t =
            std::max(rep.max_zeta_over_eps_t, zeta.norm() / (eps * std::abs(t)));
        // ∂_t r = ẋ - 2ξ_0 = 2ξ(t) - 2ξ_0 + 2ε b(x(t))ξ(t)
        VectorXd gx(n), gxi(n);
        pert.grad_symbol(x, xi, gx, gxi);
        VectorXd dr = gxi - 2.0 * alpha.xi;
        rep.max_dr_dt_over_eps = std::max(rep.max_dr_dt_over_eps, dr.norm() / eps);
        MatrixXd rx = J.dx_dx - MatrixXd::Identity(n, n);
        MatrixXd rxi = J.dx_dxi - 2.0 * t * MatrixXd::Identity(n, n);
        MatrixXd zx = J.dxi_dx;
        MatrixXd zxi = J.dxi_dxi - MatrixXd::Identity(n, n);
        double d1 = std::max({rx.cwiseAbs().maxCoeff(), rxi.cwiseAbs().maxCoeff(),
                              zx.cwiseAbs().maxCoeff(), zxi.cwiseAbs().maxCoeff()});
        rep.max_d1_over_eps_t = std::max(rep.max_d1_over_eps_t, d1 / (eps * std::abs(t)));
    }
    // second order by differencing the Jacobians at t = T
    const double h = 1e-4;
    for (int which = 0; which < 2; ++which) {
        PhasePoint ap = alpha, am = alpha;
        (which == 0 ? ap.x[0] : ap.xi[0]) += h;
        (which == 0 ? am.x[0] : am.xi[0]) -= h;
        JacobianBlocks Jp = variational_jacobian(pert, ap, T, tol);
        JacobianBlocks Jm = variational_jacobian(pert, am, T, tol);
        const double d2 =
            std::max(((Jp.dx_dx - Jm.dx_dx) / (2 * h)).cwiseAbs().maxCoeff(),
                     ((Jp.dxi_dxi - Jm.dxi_dxi) / (2 * h)).cwiseAbs().maxCoeff());
        rep.max_d2_over_eps_t = std::max(rep.max_d2_over_eps_t, d2 / (eps * T));
    }
    return rep;
}

double group_law_residual(const MetricPerturbation& pert, const PhasePoint& alpha, double t,
                          double s, double tol) {
    Trajectory tr1 = integrate_flow(pert, alpha, std::min({0.0, s, t + s}),
                                    std::max({0.0, s, t + s}), tol);
    PhasePoint mid = tr1.at(s);
    Trajectory tr2 = integrate_flow(pert, mid, std::min(0.0, t), std::max(0.0, t), tol);
    PhasePoint a = tr1.at(t + s), b = tr2.at(t);
    return std::max((a.x - b.x).cwiseAbs().maxCoeff(), (a.xi - b.xi).cwiseAbs().maxCoeff());
}

double time_reversal_residual(const MetricPerturbation& pert, const PhasePoint& alpha, double t,
                              double tol) {
    Trajectory tr = integrate_flow(pert, alpha, std::min(0.0, t), std::max(0.0, t), tol);
    PhasePoint fwd = tr.at(t);
    Trajectory back = integrate_flow(pert, fwd, std::min(0.0, -t), std::max(0.0, -t), tol);
    PhasePoint b = back.at(-t);
    return std::max((b.x - alpha.x).cwiseAbs().maxCoeff(), (b.xi - alpha.xi).cwiseAbs().maxCoeff());
}

double reversal_identity_residual(const MetricPerturbation& pert, const PhasePoint& alpha,
                                  double t, double tol) {
    VariationalTrajectory vt(pert, alpha, std::min(0.0, t), std::max(0.0, t), tol);
    VectorXd x, xi;
    JacobianBlocks J;
    vt.eval(t, x, xi, J);
    PhasePoint rho(x, xi);
    JacobianBlocks Jb = variational_jacobian(pert, rho, -t, tol);
    MatrixXd A = Jb.reversal_inverse();
    return (J.full() - A).cwiseAbs().maxCoeff();
}

}  // namespace beamlab::flow
