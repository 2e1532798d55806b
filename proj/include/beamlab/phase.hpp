#pragma once

#include "beamlab/flow.hpp"
#include "beamlab/jets.hpp"

namespace beamlab::phase {

using flow::PhasePoint;
using jets::Jet;
using jets::JetSpace;
using symbols::MetricPerturbation;

/// Snapshot of the transported phase jet at one θ: ray point and the jet of
/// φ(θ, x(θ)+u) in u (monomial coefficients; order-0 = action, order-1 =
/// momentum, order-2 = half the complex Hessian).
struct PhaseJetData {
    double theta = 0;
    VectorXd x;   // x(θ, α)
    VectorXd xi;  // ξ(θ, α)
    Jet psi;      // complex jet in u = x - x(θ,α)

    cplx action() const { return psi.value(); }
    VectorXcd grad() const;
    MatrixXcd hessian() const;
};

/// State packing helpers shared with the kernel beam tables.
struct PhaseJetSystem {
    const MetricPerturbation* pert;
    int n, order;
    const JetSpace* sp;

    PhaseJetSystem(const MetricPerturbation& p, int jet_order);
    int state_size() const { return 2 * n + 2 * sp->size(); }
    VectorXd initial_state(const PhasePoint& alpha) const;
    void unpack(double theta, const VectorXd& y, PhaseJetData& out) const;
    void rhs(double theta, const VectorXd& y, VectorXd& dy) const;
    /// Jet of p(x(θ)+u, ∇ψ(u)) truncated at `order` (the transported
    /// Hamiltonian composition; the eikonal residual is p_exact - this).
    Jet composed_symbol(const PhaseJetData& d) const;
};

/// Domain Ω_δ of Def-style case (i)/(ii)/(iii) membership (closed inequalities).
struct OmegaDomain {
    PhasePoint alpha;
    double delta = 0.01;
    double c0 = 0.1;
    double c1 = 0.01;
    flow::Classification label = flow::Classification::OutgoingBoth;

    /// Membership of (θ, x) given the ray point x(θ, α).
    bool contains(double theta, const VectorXd& x, const VectorXd& ray_x) const;
};

/// The Gaussian-beam phase: action, momentum, complex Hessian and higher Taylor
/// tensors transported along the bicharacteristic through α.
class BeamPhase {
  public:
    BeamPhase(const MetricPerturbation& pert, const PhasePoint& alpha, double theta_lo,
              double theta_hi, int jet_order, double tol, double delta = 0.01, double c0 = 0.1,
              double c1 = 0.01);

    const PhasePoint& seed() const { return alpha_; }
    int jet_order() const { return sys_.order; }
    int dim() const { return sys_.n; }
    double theta_min() const { return th_min_; }
    double theta_max() const { return th_max_; }
    const OmegaDomain& domain() const { return dom_; }
    const MetricPerturbation& pert() const { return *sys_.pert; }

    PhaseJetData at(double theta) const;
    VectorXd ray_x(double theta) const { return at(theta).x; }

    /// φ(θ,x); refuses evaluation outside the beam's Ω_δ-window unless
    /// `unchecked` (the jet has no meaning far from the ray).
    cplx eval_phase(double theta, const VectorXd& x, bool unchecked = false) const;
    VectorXcd eval_grad_phase(double theta, const VectorXd& x, bool unchecked = false) const;

    /// |∂_θφ + p(x, ∂_xφ)| assembled from the transport right-hand sides.
    double eikonal_residual(double theta, const VectorXd& x, bool unchecked = false) const;

    /// Log-log slope of the residual against |x-x(θ)|/⟨θ⟩ over [r_lo, r_hi].
    double residual_slope(double theta, const VectorXd& dir, double r_lo = 1e-3,
                          double r_hi = 1e-1, int samples = 9) const;

    /// min/max eigenvalue of Im M(θ)·(1+4θ²) over sampled θ.
    void im_hessian_range(int samples, double& lo, double& hi) const;

    const PhaseJetSystem& system() const { return sys_; }

  private:
    PhaseJetSystem sys_;
    PhasePoint alpha_;
    OmegaDomain dom_;
    ode::Solution fwd_, bwd_;
    double th_min_, th_max_;
    double tol_;
    VectorXd y0_;
};

BeamPhase transport_phase_jet(const MetricPerturbation& pert, const PhasePoint& alpha,
                              double theta_lo, double theta_hi, int jet_order = 4,
                              double tol = 1e-10, double delta = 0.01, double c0 = 0.1,
                              double c1 = 0.01);

bool phase_domain(const OmegaDomain& dom, const BeamPhase& beam, double theta, const VectorXd& x);

struct ImPhaseReport {
    double min_margin = 0;       // Im φ - [¼|u|²/(1+4θ²) - ½|α_ξ|²], min over samples
    double two_sided_C = 0;      // |Imφ + ½|α_ξ|² - ½|u|²/(1+4θ²)| / [(ε+√δ)|u|²/⟨θ⟩²]
    double max_grad_dev = 0;     // max |∂φ/∂x - α_ξ|
    int samples = 0;
};

ImPhaseReport check_imphase(const BeamPhase& beam, double theta_span, int samples, Rng& rng);

/// Free-case closed forms (ε = 0):
///   φ(θ,x,α) = [(x-α_x)·α_ξ - θ|α_ξ|² + (i/2)|x-α_x|²]/(1+2iθ) + (1/2i)|α_ξ|²,
///   M(θ) = i/(1+2iθ)·I, x(θ) = α_x + 2θα_ξ.
cplx free_phase(double theta, const VectorXd& x, const PhasePoint& alpha);
VectorXcd free_grad_phase(double theta, const VectorXd& x, const PhasePoint& alpha);
cplx free_hessian_scalar(double theta);  // i/(1+2iθ)
PhaseJetData free_phase_jet(double theta, const PhasePoint& alpha, int order);

}  // namespace beamlab::phase
