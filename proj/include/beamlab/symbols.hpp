#pragma once

#include <optional>
#include <string>

#include "beamlab/common.hpp"
#include "beamlab/jets.hpp"

namespace beamlab::symbols {

/// Decay certificate data for the coefficient class
///   Σ_{|α|=ℓ} Σ_{j,k} |∂^α b_jk(x)| <= A_ℓ / ⟨x⟩^{1+ℓ+σ0}.
struct DecayProfile {
    double sigma0 = 0.5;
    std::vector<double> seminorms;  // A_0..A_kmax
    int kmax = 8;

    void validate() const {
        if (!(sigma0 > 0.0 && sigma0 < 1.0)) throw std::invalid_argument("sigma0 must lie in (0,1)");
        if (seminorms.empty()) throw std::invalid_argument("seminorm list is empty");
        if (kmax < 4) throw std::invalid_argument("kmax must be >= 4");
        for (double a : seminorms)
            if (a < 0.0) throw std::invalid_argument("seminorms must be nonnegative");
    }
};

struct DecayOrderResult {
    int order = 0;
    double max_ratio = 0.0;  // max over grid of ⟨x⟩^{1+ℓ+σ0} Σ|∂^α b_jk|
    double bound = 0.0;      // declared A_ℓ
    bool pass = false;
};

struct CertificationReport {
    std::vector<DecayOrderResult> orders;
    double sandwich_low = 1.0;   // min over samples of p/|ξ|²
    double sandwich_high = 1.0;  // max over samples of p/|ξ|²
    bool decay_pass = false;
    bool sandwich_pass = false;
    bool pass() const { return decay_pass && sandwich_pass; }
    int first_failed_order() const {
        for (const auto& o : orders)
            if (!o.pass) return o.order;
        return -1;
    }
};

/// p(x,ξ) = |ξ|² + ε q(x,ξ), q = Σ b_jk(x) ξ_j ξ_k with b_jk = C_jk w(x),
/// w(x) = ⟨x⟩^{-s}. All builtin families have this separable form, which keeps
/// every derivative closed-form through the jet algebra.
class MetricPerturbation {
  public:
    MetricPerturbation(int n, double epsilon, MatrixXd amplitudes, double decay_exponent,
                       DecayProfile profile, std::string family_name);

    int dim() const { return n_; }
    double epsilon() const { return eps_; }
    const DecayProfile& profile() const { return profile_; }
    const std::string& family() const { return family_; }
    bool certified() const { return certified_; }
    const CertificationReport& certification() const { return report_; }
    double max_a01() const { return std::max(profile_.seminorms[0], profile_.seminorms[1]); }

    double coeff(int j, int k, const VectorXd& x) const;       // b_jk(x)
    MatrixXd coeff_matrix(const VectorXd& x) const;            // (b_jk(x))
    jets::Jet coeff_jet(int j, int k, const VectorXd& x, int order) const;

    double eval_symbol(const VectorXd& x, const VectorXd& xi) const;
    cplx eval_symbol(const VectorXd& x, const VectorXcd& xi) const;  // holomorphic in ξ

    /// Exact analytic gradients (∂_x p, ∂_ξ p).
    void grad_symbol(const VectorXd& x, const VectorXd& xi, VectorXd& gx, VectorXd& gxi) const;

    /// Second derivative blocks at (x, ξ): p_xx, p_xξ (∂_x∂_ξ), p_ξξ.
    void hessian_blocks(const VectorXd& x, const VectorXd& xi, MatrixXd& pxx, MatrixXd& pxxi,
                        MatrixXd& pxixi) const;

    /// Jet of p around (x0, ξ0) in 2n variables (x-slots first), complex-valued.
    jets::Jet symbol_jet(const VectorXd& x0, const VectorXd& xi0, int order) const;

    /// First-order coefficients of the transposed operator ᵗP = P:
    /// g_j(x) = (1/i) Σ_k ∂_k g^{kj}(x) = -i ε Σ_k ∂_k b_kj(x); returns the real
    /// factor Σ_k ∂_k b_kj (caller applies -iε).
    VectorXd div_coeff(const VectorXd& x) const;
    jets::Jet div_coeff_jet(int j, const VectorXd& x, int order) const;

    /// Scalar decay shape w(x) = ⟨x⟩^{-s} and its jet (family internals, used by tests).
    double shape(const VectorXd& x) const;
    jets::Jet shape_jet(const VectorXd& x, int order) const;

    void set_certification(const CertificationReport& r) {
        report_ = r;
        certified_ = r.pass();
    }

  private:
    int n_;
    double eps_;
    MatrixXd amps_;  // C_jk, symmetric
    double s_;       // decay exponent of w
    DecayProfile profile_;
    std::string family_;
    bool certified_ = false;
    CertificationReport report_;
};

/// Default certification grid: tensor grid on [-20,20]^n (81 per axis for n=1,
/// 41 for n=2) plus 200 random far points |x| <= 200.
std::vector<VectorXd> default_certification_grid(int n, std::uint64_t seed = 12345);

CertificationReport verify_decay(const MetricPerturbation& pert, const std::vector<VectorXd>& grid,
                                 int max_order);

/// Builtin families: zero, isotropic-bump, anisotropic-bump, off-diagonal-bump,
/// slow-decay (a planted counterexample that fails certification).
MetricPerturbation builtin_family(const std::string& name, int n, double epsilon,
                                  double sigma0 = 0.5, double amplitude = 1.0);

}  // namespace beamlab::symbols
