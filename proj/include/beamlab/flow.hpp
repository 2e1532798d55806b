#pragma once

#include "beamlab/ode.hpp"
#include "beamlab/symbols.hpp"

namespace beamlab::flow {

using symbols::MetricPerturbation;

struct PhasePoint {
    VectorXd x;
    VectorXd xi;
    PhasePoint() = default;
    PhasePoint(VectorXd x_, VectorXd xi_) : x(std::move(x_)), xi(std::move(xi_)) {}
    static PhasePoint of(double x0, double xi0) {
        return PhasePoint(VectorXd::Constant(1, x0), VectorXd::Constant(1, xi0));
    }
};

/// Solution of the bicharacteristic system through one seed, with dense output
/// on [t_lo, t_hi] ∋ 0. Holds the conserved energy p(α) for drift checks.
class Trajectory {
  public:
    Trajectory(const MetricPerturbation* pert, PhasePoint alpha, ode::Solution fwd,
               ode::Solution bwd, double tol);

    int dim() const { return n_; }
    const PhasePoint& seed() const { return alpha_; }
    double tol() const { return tol_; }
    double t_min() const { return t_min_; }
    double t_max() const { return t_max_; }
    double energy0() const { return p0_; }

    void eval(double t, VectorXd& x, VectorXd& xi) const;
    PhasePoint at(double t) const;
    double energy_drift(double t) const;

  private:
    const MetricPerturbation* pert_;
    PhasePoint alpha_;
    ode::Solution fwd_, bwd_;
    double tol_;
    int n_;
    double p0_;
    double t_min_, t_max_;
};

Trajectory integrate_flow(const MetricPerturbation& pert, const PhasePoint& alpha, double t_lo,
                          double t_hi, double tol = 1e-10);

struct JacobianBlocks {
    MatrixXd dx_dx, dx_dxi, dxi_dx, dxi_dxi;
    MatrixXd full() const {
        const int n = int(dx_dx.rows());
        MatrixXd M(2 * n, 2 * n);
        M.topLeftCorner(n, n) = dx_dx;
        M.topRightCorner(n, n) = dx_dxi;
        M.bottomLeftCorner(n, n) = dxi_dx;
        M.bottomRightCorner(n, n) = dxi_dxi;
        return M;
    }
    /// ‖MᵀJM − J‖_∞ with J the standard symplectic form.
    double symplectic_residual() const;
    /// The inverse block matrix A(s;ρ) of the reversal identity (Eq-level form).
    MatrixXd reversal_inverse() const;
};

/// Flow + variational equations in one augmented dense solve.
class VariationalTrajectory {
  public:
    VariationalTrajectory(const MetricPerturbation& pert, const PhasePoint& alpha, double t_lo,
                          double t_hi, double tol = 1e-10);
    void eval(double t, VectorXd& x, VectorXd& xi, JacobianBlocks& J) const;
    JacobianBlocks blocks(double t) const;
    PhasePoint at(double t) const;
    int dim() const { return n_; }

  private:
    int n_;
    PhasePoint alpha_;
    ode::Solution fwd_, bwd_;
};

JacobianBlocks variational_jacobian(const MetricPerturbation& pert, const PhasePoint& alpha,
                                    double t, double tol = 1e-10);

enum class Classification { OutgoingBoth, OutgoingForward, OutgoingBackward, CaseII, CaseIII };

struct ClassifyResult {
    bool in_S_plus = false;   // x·ξ >= -(1/4)⟨x⟩|ξ|
    bool in_S_minus = false;  // x·ξ <= +(1/4)⟨x⟩|ξ|
    Classification s_membership = Classification::OutgoingBoth;
    Classification domain_case = Classification::OutgoingBoth;  // Def IV.1.1 (i)/(ii)/(iii)
};

ClassifyResult classify_point(const PhasePoint& alpha, double c0);

struct OutgoingDecomposition {
    std::vector<double> times;
    std::vector<VectorXd> z, zeta;        // x(t) = x + 2t ξ(t) + z(t), ξ(t) = ξ + ζ(t)
    double max_z = 0, max_zeta = 0;       // max over components and times
    double bound = 0;                     // (2·10²/σ0) ε max(A0,A1)
    double sandwich_min = 1, sandwich_max = 1;  // (1+|x(t)|²)/(1+|x|²+t²)
    bool bounds_pass = false;
    bool sandwich_pass = false;  // against [1/3, 40]
};

/// Forward decomposition from S_+ seeds (t >= 0) or backward from S_- (t <= 0).
/// `t_span` >= 0 selects the direction by `forward`.
OutgoingDecomposition outgoing_decomposition(const MetricPerturbation& pert,
                                             const PhasePoint& alpha, double t_span,
                                             bool forward = true, int samples = 200,
                                             double tol = 1e-10);

struct DerivativeDecayEntry {
    int ax = 0, bxi = 0;   // |A|, |B|
    double z_ratio = 0;    // ⟨x⟩^{|A|+σ0} |∂^A∂^B z| / ε
    double zeta_ratio = 0; // ⟨x⟩^{1+|A|+σ0} |∂^A∂^B ζ| / ε
};

std::vector<DerivativeDecayEntry> derivative_decay_probe(const MetricPerturbation& pert,
                                                         const PhasePoint& alpha, double t,
                                                         int max_order = 2, double tol = 1e-10);

/// Crossing time θ* with x(θ*,α)·α_ξ = 0 for strongly incoming seeds
/// (α_x·α_ξ < -c0⟨α_x⟩|α_ξ|); bracketing + bisection on a strictly
/// increasing map. Throws if no sign change occurs before t_max.
double crossing_time(const MetricPerturbation& pert, const PhasePoint& alpha, double tol = 1e-10,
                     double c0 = 0.1, double t_max = 1e4);

struct NontrappingResult {
    double escape_fwd = -1, escape_bwd = -1;  // first |x| > R times (negative => trapped flag)
    bool trapped = false;
};

NontrappingResult nontrapping_probe(const MetricPerturbation& pert, const PhasePoint& seed,
                                    double t_max, double r_escape, double tol = 1e-8);

struct ShortTimeReport {
    double max_r_over_eps_t = 0;     // sup |r(t)|/(ε|t|)
    double max_zeta_over_eps_t = 0;  // sup |ζ(t)|/(ε|t|)
    double max_dr_dt_over_eps = 0;   // sup |∂_t r|/ε
    double max_d1_over_eps_t = 0;    // first-order (x,ξ)-derivatives of r, ζ over ε|t|
    double max_d2_over_eps_t = 0;    // second-order, by differencing
};

ShortTimeReport short_time_probe(const MetricPerturbation& pert, const PhasePoint& alpha,
                                 double T = 1.0, double tol = 1e-10);

/// Test helpers for the flow identities.
double group_law_residual(const MetricPerturbation& pert, const PhasePoint& alpha, double t,
                          double s, double tol = 1e-10);
double time_reversal_residual(const MetricPerturbation& pert, const PhasePoint& alpha, double t,
                              double tol = 1e-10);
/// max-norm residual of the four Lemma-reversal identities M(t;α) = A(-t; ρ(t,α)).
double reversal_identity_residual(const MetricPerturbation& pert, const PhasePoint& alpha,
                                  double t, double tol = 1e-10);

}  // namespace beamlab::flow
