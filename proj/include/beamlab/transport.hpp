#pragma once

#include "beamlab/phase.hpp"

namespace beamlab::transport {

using jets::Jet;
using jets::JetSpace;
using phase::BeamPhase;
using phase::PhaseJetData;
using symbols::MetricPerturbation;

/// Coefficient jets of the conjugated transport structure at one θ, in the
/// rescaled coordinate z = (x - x(θ,α))/⟨θ⟩:
///   L = ∂_θ + Σ h_j ∂_{z_j} + d,   Q = Σ q2_{jk} ∂²_{z_j z_k} + Σ q1_j ∂_{z_j}.
struct FieldJets {
    double theta = 0;
    std::vector<Jet> h;
    Jet d;
    std::vector<std::vector<Jet>> q2;
    std::vector<Jet> q1;

    MatrixXcd H() const;  // ∂h/∂z at z = 0
};

FieldJets build_field_jets(const MetricPerturbation& pert, const PhaseJetData& d, int order);

/// Truncation to the Taylor polynomial of degree < N0 (Eq-style h^{N0}).
Jet taylorize(const Jet& f, int n0);
FieldJets taylorize(const FieldJets& f, int n0);

class TransportField {
  public:
    TransportField(const BeamPhase& beam, int order);
    FieldJets at(double theta) const;
    const BeamPhase& beam() const { return *beam_; }
    int order() const { return order_; }
    int dim() const { return beam_->dim(); }

  private:
    const BeamPhase* beam_;
    int order_;
};

/// Fundamental matrix of Ẏ = H(θ)Y, Y(θ0,θ0) = Id.
MatrixXcd fundamental_matrix(const std::function<MatrixXcd(double)>& H, int n, double theta0,
                             double theta, double tol = 1e-10);
MatrixXcd fundamental_matrix(const TransportField& field, double theta0, double theta,
                             double tol = 1e-10);

/// Straightened chart for the truncated field: the characteristic map
/// z(θ,y) with z(0,y) = y, its inverse κ, and the certified radius η.
class StraightenedChart {
  public:
    StraightenedChart(const TransportField& field, double theta_lo, double theta_hi, double delta,
                      double tol = 1e-10, int probes = 50);

    double eta() const { return eta_; }
    double M0() const { return M0_; }
    double theta_lo() const { return th_lo_; }
    double theta_hi() const { return th_hi_; }
    const TransportField& field() const { return *field_; }

    /// Characteristic map; throws std::domain_error for |y| > η.
    VectorXcd z_of(double theta, const VectorXcd& y) const;
    MatrixXcd dz_dy(double theta, const VectorXcd& y) const;
    /// Inverse map by Newton iteration on the forward map.
    VectorXcd kappa(double theta, const VectorXcd& z) const;
    MatrixXcd Y(double theta, double theta0) const;

  private:
    const TransportField* field_;
    double th_lo_, th_hi_, eta_, M0_, tol_;
    VectorXcd z_of_unchecked(double theta, const VectorXcd& y) const;
};

VectorXcd straighten(const StraightenedChart& chart, double theta, const VectorXcd& y);

/// State of the amplitude hierarchy as y-jets: the characteristic jet Z(θ),
/// I(θ,y) = ∫ d̃ dt, and J_ℓ(θ,y) = ∫ i(Q̃Ã_{ℓ-1}) e^{∫d̃} dt, so that
/// Ã_0 = e^{-I}, Ã_ℓ = e^{-I} J_ℓ and A_ℓ(θ,z) = Ã_ℓ(θ, κ(θ,z)).
struct AmplitudeState {
    std::vector<Jet> Z;  // n jets
    Jet I;
    std::vector<Jet> J;  // J_1..J_top
};

struct AmplitudeSystem {
    const MetricPerturbation* pert;
    int n, order, n_terms;  // n_terms = number of A_ℓ with ℓ >= 1 (top index)
    const JetSpace* sp;

    AmplitudeSystem(const MetricPerturbation& p, int jet_order, int top_index);
    int state_size() const { return 2 * sp->size() * (n + 1 + n_terms); }
    VectorXd initial_state() const;
    void pack(const AmplitudeState& s, VectorXd& y) const;
    AmplitudeState unpack(const VectorXd& y) const;
    /// d(state)/dθ given the field coefficient jets at θ.
    void rhs(const FieldJets& f, const VectorXd& y, VectorXd& dy) const;
    /// A_0..A_top as z-jets.
    std::vector<Jet> a_terms(const AmplitudeState& s) const;
};

/// A_0..A_{N+1} along the beam (dense in θ): the assembled symbol is
///   a(θ,x,α,λ) = (1+θ²)^{-n/4} Σ_{ℓ<=K} λ^{-ℓ} A_ℓ(θ, (x-x(θ))/⟨θ⟩).
class AmplitudeJet {
  public:
    AmplitudeJet(const BeamPhase& beam, int n_terms /* N: top stored is N+1 */, int order,
                 double tol = 1e-10);

    std::vector<Jet> terms_at(double theta) const;  // A_0..A_{N+1} as z-jets
    cplx term(int ell, double theta, const VectorXcd& z) const;
    /// e_K = Σ_{ℓ<=K} λ^{-ℓ}A_ℓ evaluated at z; K defaults to N.
    cplx e_value(double theta, const VectorXcd& z, double lambda, int K = -1) const;
    /// a_K(θ, x): includes the ⟨θ⟩^{-n/2} prefactor; x in original coordinates.
    cplx a_value(double theta, const VectorXd& x, double lambda, int K = -1) const;

    int n_terms() const { return N_; }
    const BeamPhase& beam() const { return *beam_; }
    const AmplitudeSystem& system() const { return sys_; }

  private:
    const BeamPhase* beam_;
    AmplitudeSystem sys_;
    int N_;
    ode::Solution fwd_, bwd_;
    VectorXd y0_;
    VectorXd state_at(double theta) const;
};

AmplitudeJet amplitude_terms(const BeamPhase& beam, int n_terms, int order = 3,
                             double tol = 1e-10);

/// |b_N|: magnitude of e^{-iλφ}(iλ∂_θ - ᵗP)(e^{iλφ} a_K) at (θ, x).
double transport_residual(const BeamPhase& beam, const AmplitudeJet& ampl, double lambda,
                          double theta, const VectorXd& x, int K = -1);

/// L A_ℓ - iQ A_{ℓ-1} residual at a probe (θ, z), with ∂_θ by differencing
/// (ℓ = 0 checks L A_0).
double hierarchy_residual(const AmplitudeJet& ampl, const TransportField& field, int ell,
                          double theta, const VectorXcd& z, double dtheta = 1e-4);

}  // namespace beamlab::transport
