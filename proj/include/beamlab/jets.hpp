#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "beamlab/common.hpp"

namespace beamlab::jets {

/// Index table for truncated multivariate Taylor jets: all multi-indices γ in
/// `dim` variables with |γ| <= `order`, graded-lex ordered. Shared and cached.
struct JetSpace {
    int dim = 0;
    int order = 0;
    std::vector<std::vector<int>> exps;  // exponents per slot
    std::vector<int> deg;                // |γ| per slot
    std::vector<double> fact;            // γ! per slot
    std::vector<int32_t> prod;           // slot of γ+μ, -1 if |γ+μ| > order

    int size() const { return int(exps.size()); }
    int index_of(const std::vector<int>& e) const;  // -1 if absent
    static const JetSpace& get(int dim, int order);
};

/// Truncated Taylor jet with monomial coefficients: f(u) ~ Σ c_γ u^γ, |γ| <= N.
/// The Taylor data is ∂^γ f(base) = c_γ · γ!.
class Jet {
  public:
    Jet() = default;
    explicit Jet(const JetSpace& sp) : sp_(&sp), c_(VectorXcd::Zero(sp.size())) {}
    Jet(const JetSpace& sp, VectorXcd c) : sp_(&sp), c_(std::move(c)) {}

    static Jet constant(const JetSpace& sp, cplx v) {
        Jet j(sp);
        j.c_[0] = v;
        return j;
    }
    /// Coordinate jet: value0 + u_var.
    static Jet coordinate(const JetSpace& sp, int var, cplx value0);

    const JetSpace& space() const { return *sp_; }
    int dim() const { return sp_->dim; }
    int order() const { return sp_->order; }
    VectorXcd& coeffs() { return c_; }
    const VectorXcd& coeffs() const { return c_; }
    cplx value() const { return c_[0]; }
    cplx coeff(const std::vector<int>& e) const;
    void set_coeff(const std::vector<int>& e, cplx v);

    Jet& operator+=(const Jet& o);
    Jet& operator-=(const Jet& o);
    Jet& operator*=(cplx s) { c_ *= s; return *this; }
    Jet& operator+=(cplx s) { c_[0] += s; return *this; }
    friend Jet operator+(Jet a, const Jet& b) { a += b; return a; }
    friend Jet operator-(Jet a, const Jet& b) { a -= b; return a; }
    friend Jet operator*(Jet a, cplx s) { a *= s; return a; }
    friend Jet operator*(cplx s, Jet a) { a *= s; return a; }

    /// ∂f/∂u_var as a jet of the same order (top coefficients truncated).
    Jet derivative(int var) const;

    /// Evaluate at an offset from the base point (complex offsets allowed).
    cplx eval(const VectorXcd& u) const;
    cplx eval(const VectorXd& u) const { return eval(VectorXcd(u.cast<cplx>())); }

    /// Drop coefficients of degree > new_order (result lives in the smaller space).
    Jet truncated(int new_order) const;
    /// Re-embed into a space of higher order (new coefficients zero).
    Jet extended(int new_order) const;

  private:
    const JetSpace* sp_ = nullptr;
    VectorXcd c_;
};

/// Truncated Cauchy product.
Jet jet_multiply(const Jet& a, const Jet& b);

/// Truncated composition outer(inner_1, ..., inner_k); the computational form of
/// the Faa di Bruno formula. `outer_base` are the expansion points of the outer
/// jet; each inner value must match it.
Jet jet_compose(const Jet& outer, const std::vector<Jet>& inner, const VectorXcd& outer_base);

/// Inverse of a jet map z = Z(y) with Z(0)=0 and invertible linear part:
/// returns W with W(Z(y)) = y up to truncation. Z, W are length-dim vectors of jets.
std::vector<Jet> jet_invert_map(const std::vector<Jet>& Z);

/// exp(f) as a jet (series in the nilpotent part).
Jet jet_exp(const Jet& f);

/// Univariate jet of t -> t^a at base u0 > 0 (generalized binomial series).
Jet power_jet(double a, double u0, int order);

/// ---------------------------------------------------------------------------
/// Almost-analytic extension of a smooth decaying field f on R^m:
///   F(x,y) = f(x) + Σ_{1<=|γ|<=N} (∂^γ f(x)/γ!) (iy)^γ χ(L_{|γ|} |y|/⟨x⟩)
/// with χ the canonical radial step (1 on [0,1/2], 0 on [1,∞)). F(x,0) = f(x)
/// exactly and |∂̄F| vanishes to order N on y = 0.
/// ---------------------------------------------------------------------------
class AlmostAnalyticExtension {
  public:
    /// `field` returns the jet of f at x to the requested order.
    using FieldJet = std::function<Jet(const VectorXd& x, int order)>;

    /// Builds the extension; cutoff scales are computed from seminorms measured
    /// on `probe_points` (L_k >= max(1, 2 (D0 M_k)^{1/k}), increasing).
    AlmostAnalyticExtension(FieldJet field, int dim, int order, double sigma3,
                            const std::vector<VectorXd>& probe_points);

    /// With caller-supplied scales (must be increasing and >= 1).
    AlmostAnalyticExtension(FieldJet field, int dim, int order, std::vector<double> scales);

    cplx eval(const VectorXd& x, const VectorXd& y) const;
    /// ∂̄_j F = (∂_{x_j} + i ∂_{y_j}) F / 2 by central differences (step h).
    cplx dbar(const VectorXd& x, const VectorXd& y, int j, double h = 1e-5) const;

    /// Log-log slope of max_j |∂̄_j F(x, t·dir)| against t over t in [t_lo, t_hi].
    double dbar_decay_slope(const VectorXd& x, const VectorXd& dir, double t_lo, double t_hi,
                            int samples = 12) const;

    const std::vector<double>& scales() const { return L_; }
    const std::vector<double>& seminorms() const { return M_; }
    int order() const { return order_; }

  private:
    FieldJet field_;
    int dim_ = 0;
    int order_ = 0;
    std::vector<double> L_;  // L_1..L_N (index k-1)
    std::vector<double> M_;  // measured seminorms M_0..M_N when available
};

}  // namespace beamlab::jets
