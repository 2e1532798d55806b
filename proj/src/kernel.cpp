#include "beamlab/kernel.hpp"

#include <algorithm>
#include <numeric>

namespace beamlab::kernel {

namespace {

double cn2(int n) { return std::pow(2.0, -double(n)) * std::pow(pi, -1.5 * n); }

cplx eval_poly1(const VectorXcd& c, cplx u) {
    cplx s = c[c.size() - 1];
    for (long i = c.size() - 2; i >= 0; --i) s = s * u + c[i];
    return s;
}

}  // namespace

cplx free_A0(double theta, int n) {
    const cplx l = std::log(cplx(1.0, 2.0 * theta));
    return std::exp(-0.5 * double(n) * l + 0.25 * double(n) * std::log(1.0 + theta * theta));
}

BeamSlice free_slice(double theta, const VectorXd& ax, const VectorXd& axi,
                     const BeamOptions& opt) {
    PhasePoint alpha(ax, axi);
    PhaseJetData d = phase::free_phase_jet(theta, alpha, opt.jet_order);
    BeamSlice s;
    s.x = d.x;
    s.xi = d.xi;
    s.psi = d.psi;
    const JetSpace& spA = JetSpace::get(int(ax.size()), opt.amp_order);
    s.A.assign(opt.amp_terms + 2, Jet(spA));
    s.A[0] = Jet::constant(spA, free_A0(theta, int(ax.size())));
    return s;
}

// --------------------------------------------------------------------------
// BeamTable
// --------------------------------------------------------------------------

BeamTable::BeamTable(const MetricPerturbation& pert, const Spec& spec)
    : pert_(&pert), spec_(spec), n_(pert.dim()) {
    sp_psi_ = &JetSpace::get(n_, spec_.opts.jet_order);
    sp_amp_ = &JetSpace::get(n_, spec_.opts.amp_order);
    const int szp = sp_psi_->size(), sza = sp_amp_->size();
    block_ = 2 * n_ + 2 * szp + 2 * sza * (spec_.opts.amp_terms + 2);

    // lattice shape: axes 0..n-1 are α_x, axes n..2n-1 are α_ξ
    for (int a = 0; a < n_; ++a) {
        shape_[a] = long(std::floor((spec_.ax_hi - spec_.ax_lo) / spec_.h_ax)) + 1;
        shape_[n_ + a] = long(std::floor((spec_.axi_hi - spec_.axi_lo) / spec_.h_axi)) + 1;
    }
    n_nodes_ = 1;
    for (int a = 0; a < 2 * n_; ++a) n_nodes_ *= shape_[a];

    const int ns = int(spec_.thetas.size());
    index_.assign(ns, std::vector<int32_t>(n_nodes_, -1));
    data_.assign(ns, {});

    phase::PhaseJetSystem psys(pert, spec_.opts.jet_order);
    transport::AmplitudeSystem asys(pert, spec_.opts.amp_order, spec_.opts.amp_terms + 1);
    const long phase_sz = psys.state_size();
    const long amp_sz = asys.state_size();

    auto rhs = [&](double th, const VectorXd& y, VectorXd& dy) {
        dy.resize(y.size());
        VectorXd yp = y.head(phase_sz), dp(phase_sz);
        psys.rhs(th, yp, dp);
        dy.head(phase_sz) = dp;
        PhaseJetData d;
        psys.unpack(th, yp, d);
        transport::FieldJets f = transport::build_field_jets(pert, d, spec_.opts.amp_order);
        VectorXd da(amp_sz);
        asys.rhs(f, y.tail(amp_sz), da);
        dy.tail(amp_sz) = da;
    };

    std::array<long, 4> id{0, 0, 0, 0};
    for (long node = 0; node < n_nodes_; ++node) {
        long rem = node;
        for (int a = 2 * n_ - 1; a >= 0; --a) {
            id[a] = rem % shape_[a];
            rem /= shape_[a];
        }
        VectorXd ax = node_ax(id), axi = node_axi(id);
        // which slices does this node feed?
        std::vector<double> cps;
        std::vector<int> cps_slice;
        for (int s = 0; s < ns; ++s)
            if (needed(ax, axi, spec_.thetas[s])) {
                cps.push_back(spec_.thetas[s]);
                cps_slice.push_back(s);
            }
        if (cps.empty()) continue;
        ++nodes_built_;
        VectorXd y0(phase_sz + amp_sz);
        y0.head(phase_sz) = psys.initial_state(PhasePoint(ax, axi));
        y0.tail(amp_sz) = asys.initial_state();
        ode::Options oo;
        oo.rtol = spec_.opts.tol;
        oo.atol = spec_.opts.tol * 1e-2;
        oo.store_dense = false;
        size_t next = 0;
        auto cb = [&](double th, const VectorXd& y) {
            PhaseJetData d;
            psys.unpack(th, y.head(phase_sz), d);
            auto A = asys.a_terms(asys.unpack(y.tail(amp_sz)));
            store(cps_slice[next], node, d, A);
            ++next;
        };
        auto sol = ode::integrate(rhs, 0.0, y0, cps.back(), oo, cps, cb);
        if (!sol.ok) throw std::runtime_error("beam table: " + sol.message);
    }
}

VectorXd BeamTable::node_ax(const std::array<long, 4>& id) const {
    VectorXd v(n_);
    for (int a = 0; a < n_; ++a) v[a] = spec_.ax_lo + spec_.h_ax * double(id[a]);
    return v;
}

VectorXd BeamTable::node_axi(const std::array<long, 4>& id) const {
    VectorXd v(n_);
    for (int a = 0; a < n_; ++a) v[a] = spec_.axi_lo + spec_.h_axi * double(id[n_ + a]);
    return v;
}

bool BeamTable::needed(const VectorXd& ax, const VectorXd& axi, double theta) const {
    const double m = 1.05 * jbrack(theta) + spec_.window_margin;
    for (int a = 0; a < n_; ++a) {
        const double xf = ax[a] + 2.0 * theta * axi[a];
        if (a == 0) {
            if (xf < spec_.y_lo - m || xf > spec_.y_hi + m) return false;
        } else {
            if (std::abs(xf) > std::abs(spec_.y_hi) + m) return false;
        }
    }
    return true;
}

int BeamTable::slice_index(double theta) const {
    for (size_t s = 0; s < spec_.thetas.size(); ++s)
        if (std::abs(spec_.thetas[s] - theta) <= 1e-9 * std::max(1.0, std::abs(theta))) return int(s);
    return -1;
}

void BeamTable::store(int slice, long node, const PhaseJetData& d, const std::vector<Jet>& A) {
    std::array<long, 4> id{0, 0, 0, 0};
    long rem = node;
    for (int a = 2 * n_ - 1; a >= 0; --a) {
        id[a] = rem % shape_[a];
        rem /= shape_[a];
    }
    VectorXd ax = node_ax(id), axi = node_axi(id);
    PhaseJetData fr = phase::free_phase_jet(d.theta, PhasePoint(ax, axi), spec_.opts.jet_order);
    std::vector<double>& buf = data_[slice];
    index_[slice][node] = int32_t(buf.size() / block_);
    buf.resize(buf.size() + block_);
    double* p = buf.data() + buf.size() - block_;
    for (int a = 0; a < n_; ++a) *p++ = d.x[a] - fr.x[a];
    for (int a = 0; a < n_; ++a) *p++ = d.xi[a] - fr.xi[a];
    const int szp = sp_psi_->size();
    for (int i = 0; i < szp; ++i) {
        const cplx c = d.psi.coeffs()[i] - fr.psi.coeffs()[i];
        *p++ = c.real();
        *p++ = c.imag();
    }
    const cplx a0f = free_A0(d.theta, n_);
    const int sza = sp_amp_->size();
    for (size_t l = 0; l < A.size(); ++l)
        for (int i = 0; i < sza; ++i) {
            cplx c = A[l].coeffs()[i];
            if (l == 0 && i == 0) c -= a0f;
            *p++ = c.real();
            *p++ = c.imag();
        }
}

bool BeamTable::eval(int slice, const VectorXd& ax, const VectorXd& axi, BeamSlice& out) const {
    const double theta = spec_.thetas[slice];
    // fractional lattice coordinates
    std::array<long, 4> base{0, 0, 0, 0};
    std::array<std::array<double, 4>, 4> w{};
    for (int a = 0; a < 2 * n_; ++a) {
        const double lo = a < n_ ? spec_.ax_lo : spec_.axi_lo;
        const double h = a < n_ ? spec_.h_ax : spec_.h_axi;
        const double q = a < n_ ? ax[a] : axi[a - n_];
        const double tx = (q - lo) / h;
        long b0 = long(std::floor(tx)) - 1;
        if (b0 < 0 || b0 + 3 >= shape_[a]) return false;
        const double s = tx - double(b0 + 1);
        base[a] = b0;
        // cubic Lagrange on nodes {-1,0,1,2} with s in [0,1]
        w[a][0] = -s * (s - 1.0) * (s - 2.0) / 6.0;
        w[a][1] = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        w[a][2] = -(s + 1.0) * s * (s - 2.0) / 2.0;
        w[a][3] = (s + 1.0) * s * (s - 1.0) / 6.0;
    }
    // gather
    std::vector<double> acc(block_, 0.0);
    const std::vector<int32_t>& idx = index_[slice];
    const std::vector<double>& buf = data_[slice];
    std::array<long, 4> off{0, 0, 0, 0};
    const int dims = 2 * n_;
    std::array<long, 4> stride{0, 0, 0, 0};
    stride[dims - 1] = 1;
    for (int a = dims - 2; a >= 0; --a) stride[a] = stride[a + 1] * shape_[a + 1];
    // iterate the 4^dims stencil
    const long npts = 1L << (2 * dims);
    for (long q = 0; q < npts; ++q) {
        long rem = q;
        double wq = 1.0;
        long node = 0;
        for (int a = 0; a < dims; ++a) {
            off[a] = rem & 3;
            rem >>= 2;
            wq *= w[a][off[a]];
            node += (base[a] + off[a]) * stride[a];
        }
        const int32_t blk = idx[node];
        if (blk < 0) return false;
        const double* p = buf.data() + size_t(blk) * block_;
        for (int i = 0; i < block_; ++i) acc[i] += wq * p[i];
    }
    // unpack: free closed form + deviation
    PhaseJetData fr = phase::free_phase_jet(theta, PhasePoint(ax, axi), spec_.opts.jet_order);
    const double* p = acc.data();
    out.x = fr.x;
    out.xi = fr.xi;
    for (int a = 0; a < n_; ++a) out.x[a] += *p++;
    for (int a = 0; a < n_; ++a) out.xi[a] += *p++;
    if (out.psi.coeffs().size() != sp_psi_->size()) out.psi = Jet(*sp_psi_);
    const int szp = sp_psi_->size();
    for (int i = 0; i < szp; ++i) {
        out.psi.coeffs()[i] = fr.psi.coeffs()[i] + cplx(p[0], p[1]);
        p += 2;
    }
    const int terms = spec_.opts.amp_terms + 2;
    if (int(out.A.size()) != terms) out.A.assign(terms, Jet(*sp_amp_));
    const cplx a0f = free_A0(theta, n_);
    const int sza = sp_amp_->size();
    for (int l = 0; l < terms; ++l) {
        if (out.A[l].coeffs().size() != sza) out.A[l] = Jet(*sp_amp_);
        for (int i = 0; i < sza; ++i) {
            out.A[l].coeffs()[i] = cplx(p[0], p[1]);
            p += 2;
        }
        if (l == 0) out.A[l].coeffs()[0] += a0f;
    }
    return true;
}

// --------------------------------------------------------------------------

cplx phase_F(const BeamSlice& s, const VectorXd& x, const VectorXd& y, const VectorXd& ax,
             const VectorXd& axi) {
    VectorXcd u = (y - s.x).cast<cplx>();
    cplx F = s.psi.eval(u);
    F -= (x - ax).dot(axi);
    F += cplx(0.0, 0.5) * ((x - ax).squaredNorm() + axi.squaredNorm());
    return F;
}

void grad_F(const MetricPerturbation& pert, double theta, const VectorXd& x, const VectorXd& y,
            const VectorXd& ax, const VectorXd& axi, VectorXcd& dF_dax, VectorXcd& dF_daxi,
            double h, const BeamOptions& opt) {
    const int n = pert.dim();
    dF_dax.resize(n);
    dF_daxi.resize(n);
    auto F_at = [&](const VectorXd& a1, const VectorXd& a2) {
        phase::BeamPhase bp(pert, PhasePoint(a1, a2), std::min(0.0, theta), std::max(0.0, theta),
                            opt.jet_order, opt.tol);
        PhaseJetData d = bp.at(theta);
        BeamSlice s;
        s.x = d.x;
        s.xi = d.xi;
        s.psi = d.psi;
        return phase_F(s, x, y, a1, a2);
    };
    for (int j = 0; j < n; ++j) {
        VectorXd ap = ax, am = ax;
        ap[j] += h;
        am[j] -= h;
        dF_dax[j] = (F_at(ap, axi) - F_at(am, axi)) / (2.0 * h);
        VectorXd bp = axi, bm = axi;
        bp[j] += h;
        bm[j] -= h;
        dF_daxi[j] = (F_at(ax, bp) - F_at(ax, bm)) / (2.0 * h);
    }
}

VectorXd critical_point(const MetricPerturbation& pert, double theta, const VectorXd& x,
                        const VectorXd& y, double rho0, double tol, int max_iter, double delta2) {
    if (theta == 0.0) throw std::invalid_argument("critical_point: θ = 0");
    const double ratio = (x - y).norm() / (2.0 * std::abs(theta));
    const double a = 0.6, b = 1.9;
    if (ratio < a - 5.0 * delta2 - 1e-12 || ratio > b + 5.0 * delta2 + 1e-12)
        throw std::invalid_argument("critical_point: geometry outside case 3");
    VectorXd center = (y - x) / (2.0 * theta);
    VectorXd axi = center;
    for (int it = 0; it < max_iter; ++it) {
        flow::Trajectory tr = flow::integrate_flow(pert, PhasePoint(x, axi), std::min(0.0, theta),
                                                   std::max(0.0, theta), 1e-11);
        VectorXd xe, xie;
        tr.eval(theta, xe, xie);
        VectorXd r = xe - x - 2.0 * theta * axi;  // flow remainder
        VectorXd next = center - r / (2.0 * theta);
        if ((next - center).norm() > rho0)
            throw std::runtime_error("critical_point: iterate left the contraction ball");
        const double move = (next - axi).norm();
        axi = next;
        if (move < tol) break;
        if (it == max_iter - 1 && move > 1e3 * tol)
            throw std::runtime_error("critical_point: fixed point failed to contract");
    }
    return axi;
}

CoercivityResult coercivity_probe(const MetricPerturbation& pert, const CutoffFamily& cut,
                                  double theta, const VectorXd& x, const VectorXd& y, int samples,
                                  Rng& rng, const BeamOptions& opt) {
    const int n = pert.dim();
    CoercivityResult res;
    const double ratio = (x - y).norm() / (2.0 * std::abs(theta));
    res.case_id = ratio <= cut.a - 5 * cut.delta2 ? 1 : (ratio >= cut.b + 5 * cut.delta2 ? 2 : 3);
    VectorXd axic;
    if (res.case_id == 3) axic = critical_point(pert, theta, x, y, 0.2, 1e-10, 30, cut.delta2);
    const double D = res.case_id == 2 ? (x - y).norm() : std::abs(theta);
    int tried = 0;
    while (res.samples < samples && tried < 40 * samples) {
        ++tried;
        VectorXd ax = x + rng.uniform(0.0, 0.9) * rng.sphere(n);
        VectorXd axi(n);
        if (n == 1) {
            axi[0] = -rng.uniform(cut.a - 4 * cut.delta2, cut.b + 4 * cut.delta2);
        } else {
            axi = -rng.uniform(cut.a - 4 * cut.delta2, cut.b + 4 * cut.delta2) * cut.xi0 +
                  0.5 * cut.delta2 * rng.normal() * VectorXd::Unit(n, 1);
        }
        if (cut.psi3(axi) < 0.05) continue;
        // y must sit in the χ5 window of this beam
        flow::Trajectory tr = flow::integrate_flow(pert, PhasePoint(ax, axi), std::min(0.0, theta),
                                                   std::max(0.0, theta), 1e-10);
        VectorXd xe, xie;
        tr.eval(theta, xe, xie);
        if ((y - xe).norm() > cut.delta * jbrack(theta)) continue;
        VectorXcd dFx, dFxi;
        grad_F(pert, theta, x, y, ax, axi, dFx, dFxi, 1e-3, opt);
        const double Q = dFx.squaredNorm() + dFxi.squaredNorm() / D;
        double comp = 0;
        if (res.case_id == 3) {
            const double X2 = (ax - x).squaredNorm();
            const double Y2 = (axi - axic).squaredNorm();
            comp = X2 + std::abs(theta) * Y2;
            if (comp < 1e-6) continue;  // degenerate point filter
        } else {
            comp = (x - ax).squaredNorm() + std::abs(theta);
        }
        res.min_ratio = std::min(res.min_ratio, Q / comp);
        ++res.samples;
    }
    return res;
}

// --------------------------------------------------------------------------
// kernel quadrature
// --------------------------------------------------------------------------

namespace {

struct QuadContext {
    const MetricPerturbation* pert;
    const CutoffFamily* cut;
    int sign;
    const BeamTable* table;
    int slice = -1;
    double theta, lambda, b;
    VectorXd x, y;
    int n;
    int ampK;
    // boxes
    double rx;     // |x - α_x| window
    double ry;     // |y - x(θ,α)| window
    double chi2y;  // χ2(y) value (y fixed)
    cplx a_free = 0.0;  // (1+θ²)^{-n/4} A0_free(θ) for the ε = 0 fast path
    mutable BeamSlice scratch;
    mutable long evals = 0;
    mutable double min_imF = 1e300;
    mutable double sup_integrand = 0;

    bool get_slice(const VectorXd& ax, const VectorXd& axi, BeamSlice& out) const {
        if (!table) {
            BeamOptions o;
            out = free_slice(theta, ax, axi, o);
            return true;
        }
        return table->eval(slice, ax, axi, out);
    }

    /// integrand (without e^{iλ·explicit T*-factors} prefactor splitting): full value
    cplx integrand(const VectorXd& ax, const VectorXd& axi) const {
        const double psi3v = cut->psi3(axi);
        if (psi3v == 0.0) return 0.0;
        const double chi3v = cut->chi3(sign, ax);
        if (chi3v == 0.0) return 0.0;
        ++evals;
        cplx F, a;
        if (!table) {
            // ε = 0: closed forms, no jet objects
            VectorXd xf = ax + 2.0 * theta * axi;
            VectorXd uy = y - xf;
            const double chi5v = cut->chi5(uy / b);
            if (chi5v == 0.0) return 0.0;
            F = phase::free_phase(theta, y, PhasePoint(ax, axi));
            F -= (x - ax).dot(axi);
            F += cplx(0.0, 0.5) * ((x - ax).squaredNorm() + axi.squaredNorm());
            const double margin = F.imag() - 0.5 * (x - ax).squaredNorm();
            if (margin < min_imF) min_imF = margin;
            const cplx pref = std::exp(cplx(0.0, lambda) * F);
            const cplx val = pref * a_free * (chi3v * psi3v * chi5v * chi2y);
            const double av = std::abs(val);
            if (av > sup_integrand) sup_integrand = av;
            return val;
        }
        if (!get_slice(ax, axi, scratch)) return 0.0;
        VectorXd uy = y - scratch.x;
        const double chi5v = cut->chi5(uy / b);
        if (chi5v == 0.0) return 0.0;
        VectorXcd uyc = uy.cast<cplx>();
        F = (scratch.psi.space().dim == 1) ? eval_poly1(scratch.psi.coeffs(), uyc[0])
                                           : scratch.psi.eval(uyc);
        F -= (x - ax).dot(axi);
        F += cplx(0.0, 0.5) * ((x - ax).squaredNorm() + axi.squaredNorm());
        const double margin = F.imag() - 0.5 * (x - ax).squaredNorm();
        if (margin < min_imF) min_imF = margin;
        // amplitude a = ⟨θ⟩^{-n/2} Σ λ^{-ℓ} A_ℓ(z) with ⟨θ⟩^{-n/2} = (1+θ²)^{-n/4}
        VectorXcd z = uyc / b;
        cplx e = 0.0;
        double lp = 1.0;
        for (int l = 0; l <= ampK && l < int(scratch.A.size()); ++l) {
            e += (scratch.A[l].space().dim == 1 ? eval_poly1(scratch.A[l].coeffs(), z[0])
                                                : scratch.A[l].eval(z)) *
                 lp;
            lp /= lambda;
        }
        a = std::pow(1.0 + theta * theta, -0.25 * n) * e;
        const cplx pref = std::exp(cplx(0.0, lambda) * F);
        const cplx val = pref * a * (chi3v * psi3v * chi5v * chi2y);
        const double av = std::abs(val);
        if (av > sup_integrand) sup_integrand = av;
        return val;
    }
};

/// probe max|∂Re F/∂α| over the box corners/center using the free closed form
void probe_gradients(const QuadContext& ctx, double& gx, double& gxi) {
    gx = 0.1;
    gxi = 0.05;
    for (int px = -1; px <= 1; ++px)
        for (int ps = -1; ps <= 1; ++ps) {
            VectorXd ax = ctx.x + (px * 0.9 * ctx.rx) * VectorXd::Ones(ctx.n);
            // representative α_ξ on the ψ3 shell towards -ξ0
            const double s = 0.5 * (ctx.cut->a + ctx.cut->b) + ps * 0.45 * (ctx.cut->b - ctx.cut->a);
            VectorXd axi = -s * ctx.cut->xi0;
            const double h = 1e-4;
            auto Ffree = [&](const VectorXd& a1, const VectorXd& a2) {
                return phase::free_phase(ctx.theta, ctx.y, PhasePoint(a1, a2)) -
                       cplx((ctx.x - a1).dot(a2)) +
                       cplx(0.0, 0.5) * ((ctx.x - a1).squaredNorm() + a2.squaredNorm());
            };
            for (int j = 0; j < ctx.n; ++j) {
                VectorXd ap = ax, am = ax;
                ap[j] += h;
                am[j] -= h;
                gx = std::max(gx, std::abs((Ffree(ap, axi) - Ffree(am, axi)).real()) / (2 * h));
                VectorXd bp = axi, bm = axi;
                bp[j] += h;
                bm[j] -= h;
                gxi = std::max(gxi, std::abs((Ffree(ax, bp) - Ffree(ax, bm)).real()) / (2 * h));
            }
        }
    gx *= 1.3;  // ε headroom
    gxi *= 1.3;
}

/// one quadrature pass at spacings (hx, hxi); n = 1 and n = 2 supported
cplx quad_pass(const QuadContext& ctx, double hx, double hxi) {
    const int n = ctx.n;
    cplx acc = 0.0;
    // α_x box: |x - α_x| <= rx (per axis)
    std::array<long, 2> nx{1, 1};
    for (int a = 0; a < n; ++a) nx[a] = long(std::floor(2.0 * ctx.rx / hx)) + 1;
    std::array<long, 2> nxi_max{1, 1};
    VectorXd ax(n), axi(n);
    for (long i0 = 0; i0 < nx[0]; ++i0) {
        ax[0] = ctx.x[0] - ctx.rx + hx * double(i0);
        for (long i1 = 0; i1 < (n == 2 ? nx[1] : 1); ++i1) {
            if (n == 2) ax[1] = ctx.x[1] - ctx.rx + hx * double(i1);
            // α_ξ window per column from |y - α_x - 2θα_ξ| <= ry + margin
            std::array<double, 2> lo{0, 0}, hi{0, 0};
            bool empty = false;
            for (int a = 0; a < n; ++a) {
                const double c1 = (ctx.y[a] - ax[a] - (ctx.ry + 0.8)) / (2.0 * ctx.theta);
                const double c2 = (ctx.y[a] - ax[a] + (ctx.ry + 0.8)) / (2.0 * ctx.theta);
                lo[a] = std::min(c1, c2);
                hi[a] = std::max(c1, c2);
                // intersect with the ψ3 support box
                double slo, shi;
                if (n == 1) {
                    // α_ξ aligned against ξ0
                    if (ctx.cut->xi0[0] > 0) {
                        slo = -(ctx.cut->b + 4 * ctx.cut->delta2);
                        shi = -(ctx.cut->a - 4 * ctx.cut->delta2);
                    } else {
                        slo = ctx.cut->a - 4 * ctx.cut->delta2;
                        shi = ctx.cut->b + 4 * ctx.cut->delta2;
                    }
                } else {
                    slo = -(ctx.cut->b + 4 * ctx.cut->delta2);
                    shi = ctx.cut->b + 4 * ctx.cut->delta2;
                }
                lo[a] = std::max(lo[a], slo);
                hi[a] = std::min(hi[a], shi);
                if (hi[a] <= lo[a]) empty = true;
            }
            if (empty) continue;
            for (int a = 0; a < n; ++a)
                nxi_max[a] = std::max(2L, long(std::floor((hi[a] - lo[a]) / hxi)) + 1);
            for (long j0 = 0; j0 < nxi_max[0]; ++j0) {
                axi[0] = lo[0] + hxi * double(j0);
                if (n == 1) {
                    acc += ctx.integrand(ax, axi);
                } else {
                    for (long j1 = 0; j1 < nxi_max[1]; ++j1) {
                        axi[1] = lo[1] + hxi * double(j1);
                        acc += ctx.integrand(ax, axi);
                    }
                }
            }
        }
    }
    double cell = 1.0;
    for (int a = 0; a < n; ++a) cell *= hx * hxi;
    return acc * cell;
}

}  // namespace

KernelSample kernel_quadrature(const MetricPerturbation& pert, const CutoffFamily& cut, int sign,
                               const BeamTable* table, double t, const VectorXd& x,
                               const VectorXd& y, double lambda, const QuadratureConfig& cfg) {
    if (lambda < 1.0) throw std::invalid_argument("kernel_quadrature: λ >= 1");
    if (t == 0.0) throw std::invalid_argument("kernel_quadrature: t = 0");
    const double theta = lambda * t;
    QuadContext ctx;
    ctx.pert = &pert;
    ctx.cut = &cut;
    ctx.sign = sign;
    ctx.table = pert.epsilon() == 0.0 ? nullptr : table;
    if (pert.epsilon() != 0.0) {
        if (!table) throw std::invalid_argument("kernel_quadrature: ε > 0 needs a beam table");
        ctx.slice = table->slice_index(theta);
        if (ctx.slice < 0) throw std::invalid_argument("kernel_quadrature: θ slice not tabulated");
    }
    ctx.theta = theta;
    ctx.lambda = lambda;
    ctx.b = jbrack(theta);
    ctx.x = x;
    ctx.y = y;
    ctx.n = pert.dim();
    ctx.ampK = cfg.amp_K;
    ctx.rx = std::sqrt(2.0 * cfg.lambda_cut_x / lambda);
    ctx.ry = std::min(cut.delta * ctx.b,
                      2.0 * std::sqrt(cfg.lambda_cut_y * (1.0 + 4.0 * theta * theta) / lambda));
    ctx.chi2y = cut.chi2(sign, y);
    ctx.a_free = std::pow(1.0 + theta * theta, -0.25 * ctx.n) * free_A0(theta, ctx.n);

    double gx, gxi;
    probe_gradients(ctx, gx, gxi);
    double hx = std::min(pi / (cfg.osc_points * lambda * gx), 2.0 * ctx.rx / 32.0);
    // α_ξ oscillation scale from the damped window
    const double gxi_eff = std::max(gxi, (ctx.ry + 0.8) / std::abs(1.0 + 2.0 * theta) * 1.3);
    double hxi = std::min(pi / (cfg.osc_points * lambda * gxi_eff), 0.05);
    hx = std::max(hx, 2.0 * ctx.rx / double(cfg.max_nodes_per_axis));
    hxi = std::max(hxi, 1e-8);

    KernelSample out;
    out.t = t;
    out.lambda = lambda;
    out.x = x;
    out.y = y;
    const double pref = cn2(ctx.n) * std::pow(lambda, 1.5 * ctx.n);
    const cplx k1 = pref * quad_pass(ctx, hx, hxi);
    const cplx k2 = pref * quad_pass(ctx, hx / 2.0, hxi / 2.0);
    out.nodes = ctx.evals;
    // Richardson extrapolation of the trapezoid pair
    out.k = (4.0 * k2 - k1) / 3.0;
    out.err = std::abs(k2 - k1);
    out.converged = out.err <= std::max(cfg.conv_rel * std::abs(out.k), cfg.conv_floor);
    out.min_imF_margin = ctx.min_imF == 1e300 ? 0.0 : ctx.min_imF;
    // excluded-region estimate: e^{-Λ} * sup|integrand| * (box volume)
    double vol = 1.0;
    for (int a = 0; a < ctx.n; ++a) vol *= (2.0 * ctx.rx) * (cut.b - cut.a + 8 * cut.delta2);
    out.tail_bound = std::exp(-cfg.lambda_cut_x) * ctx.sup_integrand * vol * pref;
    const double abs_lt = std::abs(lambda * t);
    if (abs_lt >= 1.0) {
        out.regime = t > 0 ? "fwd" : "bwd";
    } else {
        const double ratio = (x - y).norm() / (2.0 * std::abs(theta));
        out.regime = ratio <= cut.a - 5 * cut.delta2 ? "case1"
                     : ratio >= cut.b + 5 * cut.delta2 ? "case2"
                                                       : "case3";
    }
    return out;
}

SweepResult dispersion_sweep(const MetricPerturbation& pert, const CutoffFamily& cut,
                             const std::vector<double>& lambdas,
                             const std::vector<double>& lambda_t_values,
                             const std::vector<double>& y_values, int s_points,
                             const QuadratureConfig& cfg, const BeamOptions& bopt) {
    const int n = pert.dim();
    if (n != 1) throw std::invalid_argument("dispersion_sweep: desk scale is n = 1");
    SweepResult res;
    // one table serves every λ: slices are indexed by θ = λt
    std::unique_ptr<BeamTable> table;
    std::vector<double> thetas = lambda_t_values;
    std::sort(thetas.begin(), thetas.end(),
              [](double a, double b) { return std::abs(a) < std::abs(b); });
    const double ymin = *std::min_element(y_values.begin(), y_values.end());
    const double ymax = *std::max_element(y_values.begin(), y_values.end());
    if (pert.epsilon() != 0.0) {
        BeamTable::Spec spec;
        spec.opts = bopt;
        const double thmax = std::abs(thetas.back());
        const double reach = 2.0 * thmax * (cut.b + 6 * cut.delta2) + 2.0;
        spec.ax_lo = ymin - reach * (thetas.back() < 0 ? 1.0 : 0.0) - 2.0;
        spec.ax_hi = ymax + reach * (thetas.back() > 0 ? 1.0 : 0.0) + 2.0;
        spec.h_ax = 0.025;
        spec.axi_lo = -(cut.b + 5 * cut.delta2);
        spec.axi_hi = -(cut.a - 5 * cut.delta2);
        spec.h_axi = 0.04;
        spec.thetas = thetas;
        spec.y_lo = ymin - 0.5;
        spec.y_hi = ymax + 0.5;
        spec.window_margin = 1.5;
        table = std::make_unique<BeamTable>(pert, spec);
    }
    for (double lt : lambda_t_values)
        for (double lam : lambdas) {
            const double t = lt / lam;
            if (std::abs(t) > 1.0) continue;
            SweepRow row;
            row.t = t;
            row.lambda = lam;
            for (double yv : y_values) {
                VectorXd y = VectorXd::Constant(1, yv);
                std::vector<double> svals;
                for (int i = 0; i < s_points; ++i)
                    svals.push_back(0.05 + (cut.b + 0.5 - 0.05) * double(i) / (s_points - 1));
                for (double s : svals) {
                    VectorXd x = y + VectorXd::Constant(1, 2.0 * lt * s);
                    KernelSample ks =
                        kernel_quadrature(pert, cut, +1, table.get(), t, x, y, lam, cfg);
                    row.regime = ks.regime;
                    if (!ks.converged && std::abs(ks.k) > cfg.conv_floor) {
                        ++row.flagged;
                    } else {
                        row.sup_scaled = std::max(
                            row.sup_scaled, std::abs(ks.k) * std::pow(std::abs(t), 0.5 * n));
                    }
                    row.samples.push_back(std::move(ks));
                }
            }
            res.total_flagged += row.flagged;
            res.rows.push_back(std::move(row));
        }
    std::vector<double> ms;
    for (const auto& r : res.rows)
        if (r.sup_scaled > 0) ms.push_back(r.sup_scaled);
    if (!ms.empty()) {
        std::vector<double> sorted = ms;
        std::sort(sorted.begin(), sorted.end());
        const double med = sorted[sorted.size() / 2];
        res.max_over_median = sorted.back() / std::max(med, 1e-300);
        res.pass = res.max_over_median <= 3.0;
    }
    return res;
}

SpatialField apply_parametrix(const MetricPerturbation& pert, const CutoffFamily& cut,
                              const SpatialField& u0, double t, double lambda,
                              const QuadratureConfig& cfg, const BeamOptions& bopt) {
    const int n = u0.grid.n;
    if (n != 1) throw std::invalid_argument("apply_parametrix: desk scale is n = 1");
    const double theta = lambda * t;
    const double b = jbrack(theta);
    // w = ψ2(D/λ) χ1 u0
    SpatialField w = u0;
    for (long i = 0; i < w.v.size(); ++i) w.v[i] *= cut.chi1(+1, w.grid.point(i));
    w = fbi::frequency_cutoff_apply([&](const VectorXd& k) { return cut.psi2(k); }, lambda, w);
    // numerical support of w
    double wmax = w.linf();
    long ilo = w.v.size(), ihi = -1;
    for (long i = 0; i < w.v.size(); ++i)
        if (std::abs(w.v[i]) > 1e-9 * wmax) {
            ilo = std::min(ilo, i);
            ihi = std::max(ihi, i);
        }
    SpatialField out(u0.grid);
    if (ihi < ilo) return out;
    const double wy_lo = w.grid.point(ilo)[0], wy_hi = w.grid.point(ihi)[0];
    const double ry =
        std::min(cut.delta * b, 2.0 * std::sqrt(cfg.lambda_cut_y * (1 + 4 * theta * theta) / lambda));
    // beam table over the α_x span feeding this output
    const double shift1 = 2.0 * theta * (cut.a - 5 * cut.delta2);
    const double shift2 = 2.0 * theta * (cut.b + 5 * cut.delta2);
    const double axspan_lo = wy_lo + std::min(shift1, shift2) - 1.5;
    const double axspan_hi = wy_hi + std::max(shift1, shift2) + 1.5;
    std::unique_ptr<BeamTable> table;
    if (pert.epsilon() != 0.0) {
        BeamTable::Spec spec;
        spec.opts = bopt;
        spec.ax_lo = axspan_lo;
        spec.ax_hi = axspan_hi;
        spec.h_ax = 0.025;
        spec.axi_lo = -(cut.b + 5 * cut.delta2);
        spec.axi_hi = -(cut.a - 5 * cut.delta2);
        spec.h_axi = 0.04;
        spec.thetas = {theta};
        spec.y_lo = wy_lo - 0.5;
        spec.y_hi = wy_hi + 0.5;
        table = std::make_unique<BeamTable>(pert, spec);
    }
    // G-lattice
    const double gx = 2.0 * (cut.b + 4 * cut.delta2) + 1.0;
    const double hax = pi / (cfg.osc_points * lambda * gx);
    const long nax = long((axspan_hi - axspan_lo) / hax) + 1;
    const double gxi_eff = (ry + 0.4 + 0.5 * (wy_hi - wy_lo)) / std::abs(1.0 + 2.0 * theta) * 1.3;
    const double hxi = std::min(pi / (cfg.osc_points * lambda * std::max(gxi_eff, 0.02)), 0.04);

    struct GCol {
        double axi0;
        long nxi;
        std::vector<cplx> g;
    };
    std::vector<GCol> cols(nax);
    BeamSlice scratch;
    const double hy = u0.grid.h(0);
    for (long ia = 0; ia < nax; ++ia) {
        const double axv = axspan_lo + hax * double(ia);
        GCol& col = cols[ia];
        col.nxi = 0;
        VectorXd ax = VectorXd::Constant(1, axv);
        const double chi3v = cut.chi3(+1, ax);
        if (chi3v == 0.0) continue;
        // α_ξ window: |y - α_x - 2θ α_ξ| <= ry + margin for y in [wy_lo, wy_hi]
        double lo = std::min((wy_lo - axv - ry - 0.4) / (2 * theta), (wy_hi - axv + ry + 0.4) / (2 * theta));
        double hi = std::max((wy_lo - axv - ry - 0.4) / (2 * theta), (wy_hi - axv + ry + 0.4) / (2 * theta));
        lo = std::max(lo, -(cut.b + 4 * cut.delta2));
        hi = std::min(hi, -(cut.a - 4 * cut.delta2));
        if (hi <= lo) continue;
        col.axi0 = lo;
        col.nxi = long((hi - lo) / hxi) + 1;
        col.g.assign(col.nxi, 0.0);
        for (long j = 0; j < col.nxi; ++j) {
            VectorXd axi = VectorXd::Constant(1, lo + hxi * double(j));
            const double psi3v = cut.psi3(axi);
            if (psi3v == 0.0) continue;
            bool have;
            if (table) {
                have = table->eval(0, ax, axi, scratch);
            } else {
                scratch = free_slice(theta, ax, axi, bopt);
                have = true;
            }
            if (!have) continue;
            // y-window
            const double xc = scratch.x[0];
            long j0 = long(std::ceil((std::max(xc - ry, wy_lo) - u0.grid.lo[0]) / hy));
            long j1 = long(std::floor((std::min(xc + ry, wy_hi) - u0.grid.lo[0]) / hy));
            j0 = std::max(j0, 0L);
            j1 = std::min(j1, long(u0.grid.shape[0]) - 1);
            cplx acc = 0.0;
            for (long jy = j0; jy <= j1; ++jy) {
                const double yv = u0.grid.lo[0] + hy * double(jy);
                const double uy = yv - xc;
                const double chi5v = cut.chi5(VectorXd::Constant(1, uy) / b);
                if (chi5v == 0.0) continue;
                const cplx phi = eval_poly1(scratch.psi.coeffs(), cplx(uy));
                cplx e = 0.0;
                double lp = 1.0;
                for (int l = 0; l <= cfg.amp_K && l < int(scratch.A.size()); ++l) {
                    e += eval_poly1(scratch.A[l].coeffs(), cplx(uy / b)) * lp;
                    lp /= lambda;
                }
                const cplx a = std::pow(1.0 + theta * theta, -0.25) * e;
                VectorXd yvec = VectorXd::Constant(1, yv);
                const double chi2v = cut.chi2(+1, yvec);
                acc += std::exp(cplx(0.0, lambda) * phi) * a * (chi2v * chi5v) * w.v[jy];
            }
            // weighted T*-side factors independent of x
            col.g[j] = acc * hy * (chi3v * psi3v) * std::exp(-0.5 * lambda * axi.squaredNorm());
        }
    }
    // out(x) = c_n² λ^{3n/2} Σ e^{-iλ(x-α_x)α_ξ - λ/2|x-α_x|²} G
    const double pref = cn2(1) * std::pow(lambda, 1.5) * hax * hxi;
    const double rx = std::sqrt(2.0 * cfg.lambda_cut_x / lambda);
    for (long i = 0; i < out.v.size(); ++i) {
        const double xv = out.grid.point(i)[0];
        long a0 = long(std::ceil((xv - rx - axspan_lo) / hax));
        long a1 = long(std::floor((xv + rx - axspan_lo) / hax));
        a0 = std::max(a0, 0L);
        a1 = std::min(a1, nax - 1);
        if (a1 < a0) continue;
        cplx acc = 0.0;
        for (long ia = a0; ia <= a1; ++ia) {
            const GCol& col = cols[ia];
            if (col.nxi == 0) continue;
            const double u = xv - (axspan_lo + hax * double(ia));
            const double damp = std::exp(-0.5 * lambda * u * u);
            if (damp < 1e-18) continue;
            cplx s = 0.0;
            for (long j = 0; j < col.nxi; ++j) {
                const double axiv = col.axi0 + hxi * double(j);
                s += std::exp(cplx(0.0, -lambda * u * axiv)) * col.g[j];
            }
            acc += damp * s;
        }
        out.v[i] = pref * acc;
    }
    // final wrap: χ1 ψ2(D/λ) χ2 (·)
    for (long i = 0; i < out.v.size(); ++i) out.v[i] *= cut.chi2(+1, out.grid.point(i));
    out = fbi::frequency_cutoff_apply([&](const VectorXd& k) { return cut.psi2(k); }, lambda, out);
    for (long i = 0; i < out.v.size(); ++i) out.v[i] *= cut.chi1(+1, out.grid.point(i));
    return out;
}

CompareResult compare_parametrix(const MetricPerturbation& pert, const CutoffFamily& cut,
                                 const SpatialField& u0, double t, double lambda,
                                 const QuadratureConfig& cfg, const BeamOptions& bopt) {
    CompareResult res;
    res.t = t;
    res.lambda = lambda;
    SpatialField ref = reference::sandwiched_propagator(pert, cut, +1, u0, t, lambda);
    SpatialField par = apply_parametrix(pert, cut, u0, t, lambda, cfg, bopt);
    res.rel_l2 = std::sqrt((par.v - ref.v).squaredNorm() / std::max(ref.v.squaredNorm(), 1e-300));
    return res;
}

}  // namespace beamlab::kernel
