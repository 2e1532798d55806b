#pragma once

#include "beamlab/fbi.hpp"
#include "beamlab/reference.hpp"
#include "beamlab/transport.hpp"

namespace beamlab::kernel {

using fbi::CutoffFamily;
using fbi::SpatialField;
using flow::PhasePoint;
using jets::Jet;
using jets::JetSpace;
using phase::PhaseJetData;
using symbols::MetricPerturbation;

/// Per-α data needed by the oscillatory quadrature at one θ: ray point, phase
/// jet, and amplitude term jets A_0..A_top in z = (y - x(θ,α))/⟨θ⟩.
struct BeamSlice {
    VectorXd x, xi;
    Jet psi;
    std::vector<Jet> A;
};

struct BeamOptions {
    int jet_order = 4;
    int amp_order = 3;   // z-jet order of the amplitude terms
    int amp_terms = 2;   // N: A_0..A_{N+1} are transported
    double tol = 1e-9;
};

/// Free-case closed forms (ε = 0): exact beams, constant amplitude term
///   A_0(θ) = (1+2iθ)^{-n/2} (1+θ²)^{n/4},  A_ℓ = 0 (ℓ >= 1).
cplx free_A0(double theta, int n);
BeamSlice free_slice(double theta, const VectorXd& ax, const VectorXd& axi,
                     const BeamOptions& opt);

/// Tabulated beams for ε > 0: a tensor α-lattice; each node transported once
/// through the full |θ|-range, slices dumped where the node can meet the
/// χ5-window over the y-zone. Evaluation interpolates the deviation from the
/// free closed forms (tensor Catmull-Rom), so the free part is exact.
class BeamTable {
  public:
    struct Spec {
        double ax_lo = -2, ax_hi = 2, h_ax = 0.025;
        double axi_lo = -2, axi_hi = -0.5, h_axi = 0.04;
        std::vector<double> thetas;  // one sign, sorted by |θ| ascending
        double y_lo = -1, y_hi = 3;  // zone the χ5 windows must reach
        double window_margin = 1.2;
        BeamOptions opts;
    };

    BeamTable(const MetricPerturbation& pert, const Spec& spec);

    int slice_index(double theta) const;  // -1 if absent
    /// Interpolated slice at (θ_s, α); false if the lattice has no data there.
    bool eval(int slice, const VectorXd& ax, const VectorXd& axi, BeamSlice& out) const;
    const Spec& spec() const { return spec_; }
    const MetricPerturbation& pert() const { return *pert_; }
    long nodes_built() const { return nodes_built_; }

  private:
    const MetricPerturbation* pert_;
    Spec spec_;
    int n_;
    const JetSpace* sp_psi_;
    const JetSpace* sp_amp_;
    int block_;  // doubles per stored (node, slice)
    std::array<long, 4> shape_{1, 1, 1, 1};
    long n_nodes_ = 1, nodes_built_ = 0;
    std::vector<std::vector<int32_t>> index_;  // per slice: node -> offset (-1 absent)
    std::vector<std::vector<double>> data_;    // per slice: packed deviations

    long node_count() const { return n_nodes_; }
    VectorXd node_ax(const std::array<long, 4>& id) const;
    VectorXd node_axi(const std::array<long, 4>& id) const;
    bool needed(const VectorXd& ax, const VectorXd& axi, double theta) const;
    void store(int slice, long node, const PhaseJetData& d, const std::vector<Jet>& A);
};

/// F(θ,x,y,α) = φ(θ,y,α) - (x-α_x)·α_ξ + (i/2)|x-α_x|² + (i/2)|α_ξ|².
cplx phase_F(const BeamSlice& s, const VectorXd& x, const VectorXd& y, const VectorXd& ax,
             const VectorXd& axi);

/// ∇_α F by central differences over freshly transported beams (spacing h).
void grad_F(const MetricPerturbation& pert, double theta, const VectorXd& x, const VectorXd& y,
            const VectorXd& ax, const VectorXd& axi, VectorXcd& dF_dax, VectorXcd& dF_daxi,
            double h = 1e-3, const BeamOptions& opt = {});

/// Case-3 critical point: solves x(θ, x, α_ξ) = y in the ball around (y-x)/2θ.
VectorXd critical_point(const MetricPerturbation& pert, double theta, const VectorXd& x,
                        const VectorXd& y, double rho0 = 0.2, double tol = 1e-10,
                        int max_iter = 20, double delta2 = 0.01);

struct CoercivityResult {
    int case_id = 0;
    double min_ratio = 1e300;  // min over samples of Q / comparison
    int samples = 0;
};

/// Normalized coercivity of Q = |∂F/∂α_x|² + (1/D)|∂F/∂α_ξ|² per case regime.
CoercivityResult coercivity_probe(const MetricPerturbation& pert, const CutoffFamily& cut,
                                  double theta, const VectorXd& x, const VectorXd& y, int samples,
                                  Rng& rng, const BeamOptions& opt = {});

struct QuadratureConfig {
    double lambda_cut_x = 36.0;  // e^{-Λ} truncation of the |x-α_x| Gaussian
    double lambda_cut_y = 25.0;  // same for the beam-window damping
    double osc_points = 8.0;     // nodes per oscillation period
    int min_nodes = 12;
    long max_nodes_per_axis = 400000;
    int amp_K = 2;               // amplitude terms in a = ⟨θ⟩^{-n/2} Σ λ^{-ℓ}A_ℓ
    double conv_rel = 0.01, conv_floor = 1e-8;
};

struct KernelSample {
    double t = 0, lambda = 1;
    VectorXd x, y;
    cplx k = 0;
    double err = 0;           // difference between refinement levels
    double tail_bound = 0;    // e^{-Λ}-excluded-region estimate
    double min_imF_margin = 0;  // min over nodes of Im F - ½|x-α_x|²
    std::string regime;
    bool converged = false;
    long nodes = 0;
};

/// k_sign(t,x,y,λ) by damped tensor-trapezoid quadrature over α with one
/// halving refinement; θ = λt (our orientation of the parametrix clock).
KernelSample kernel_quadrature(const MetricPerturbation& pert, const CutoffFamily& cut, int sign,
                               const BeamTable* table, double t, const VectorXd& x,
                               const VectorXd& y, double lambda, const QuadratureConfig& cfg = {});

struct SweepRow {
    double t, lambda;
    double sup_scaled = 0;  // sup_{x,y} |k| |t|^{n/2}
    std::string regime;
    int flagged = 0;
    std::vector<KernelSample> samples;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    double max_over_median = 0;
    bool pass = false;
    int total_flagged = 0;
};

/// Grids adapt to the propagation cone: x = y + 2θ s over an s-grid together
/// with near-diagonal probes for the |λt| <= 1 cases.
SweepResult dispersion_sweep(const MetricPerturbation& pert, const CutoffFamily& cut,
                             const std::vector<double>& lambdas,
                             const std::vector<double>& lambda_t_values,
                             const std::vector<double>& y_values, int s_points = 24,
                             const QuadratureConfig& cfg = {}, const BeamOptions& bopt = {});

/// I-term application: χ1 ψ2(D/λ) χ2 ∘ [∫k(t,x,y)·dy] ∘ ψ2(D/λ) χ1 u0.
SpatialField apply_parametrix(const MetricPerturbation& pert, const CutoffFamily& cut,
                              const SpatialField& u0, double t, double lambda,
                              const QuadratureConfig& cfg = {}, const BeamOptions& bopt = {});

struct CompareResult {
    double t = 0, lambda = 0;
    double rel_l2 = 0;  // ‖parametrix - reference‖₂ / ‖reference‖₂
};

/// Parametrix vs the sandwiched reference propagator on wave-packet data.
CompareResult compare_parametrix(const MetricPerturbation& pert, const CutoffFamily& cut,
                                 const SpatialField& u0, double t, double lambda,
                                 const QuadratureConfig& cfg = {}, const BeamOptions& bopt = {});

}  // namespace beamlab::kernel
