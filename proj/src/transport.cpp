#include "beamlab/transport.hpp"

namespace beamlab::transport {

namespace {

/// rescale a jet in y to the variable z = y/b: monomial coeffs pick up b^{|γ|}
Jet rescale_to_z(const Jet& jy, double b, const JetSpace& sp_out) {
    Jet out(sp_out);
    const JetSpace& spi = jy.space();
    for (int i = 0; i < sp_out.size(); ++i) {
        const int j = spi.index_of(sp_out.exps[i]);
        if (j < 0) continue;
        out.coeffs()[i] = jy.coeffs()[j] * std::pow(b, sp_out.deg[i]);
    }
    return out;
}

}  // namespace

MatrixXcd FieldJets::H() const {
    const int n = int(h.size());
    MatrixXcd out(n, n);
    std::vector<int> e(n, 0);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            e.assign(n, 0);
            e[k] = 1;
            out(j, k) = h[j].coeff(e);
        }
    return out;
}

FieldJets build_field_jets(const MetricPerturbation& pert, const PhaseJetData& d, int order) {
    const int n = int(d.x.size());
    const JetSpace& sp = JetSpace::get(n, order);
    const double b = jbrack(d.theta);
    const double eps = pert.epsilon();

    FieldJets f;
    f.theta = d.theta;

    // Φ_j and ∂²ψ as z-jets
    std::vector<Jet> Phi(n, Jet(sp));
    std::vector<std::vector<Jet>> D2(n, std::vector<Jet>(n, Jet(sp)));
    for (int j = 0; j < n; ++j) {
        Jet dj = d.psi.derivative(j);
        Phi[j] = rescale_to_z(dj, b, sp);
        for (int k = 0; k < n; ++k) D2[j][k] = rescale_to_z(dj.derivative(k), b, sp);
    }
    // G^{jk}(x(θ) + b z) as z-jets
    std::vector<std::vector<Jet>> G(n, std::vector<Jet>(n, Jet(sp)));
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            Jet g = Jet::constant(sp, j == k ? 1.0 : 0.0);
            if (eps != 0.0) g += cplx(eps) * rescale_to_z(pert.coeff_jet(j, k, d.x, order), b, sp);
            G[j][k] = g;
        }
    // divergence coefficients D_j = Σ_k ∂_k b_kj at x(θ) + b z
    std::vector<Jet> Dv(n, Jet(sp));
    if (eps != 0.0)
        for (int j = 0; j < n; ++j) Dv[j] = rescale_to_z(pert.div_coeff_jet(j, d.x, order), b, sp);

    VectorXd gx(n), gxi(n);
    pert.grad_symbol(d.x, d.xi, gx, gxi);

    f.h.assign(n, Jet(sp));
    for (int k = 0; k < n; ++k) {
        Jet hk(sp);
        for (int j = 0; j < n; ++j) hk += 2.0 * jets::jet_multiply(G[j][k], Phi[j]);
        hk += cplx(-gxi[k]);
        hk *= cplx(1.0 / b);
        hk -= (d.theta / (b * b)) * Jet::coordinate(sp, k, 0.0);
        f.h[k] = hk;
    }
    f.d = Jet(sp);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) f.d += jets::jet_multiply(G[j][k], D2[j][k]);
    f.d += cplx(-0.5 * n * d.theta / (1.0 + d.theta * d.theta));
    if (eps != 0.0)
        for (int j = 0; j < n; ++j) f.d += cplx(eps) * jets::jet_multiply(Dv[j], Phi[j]);

    f.q2.assign(n, std::vector<Jet>(n, Jet(sp)));
    f.q1.assign(n, Jet(sp));
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) f.q2[j][k] = cplx(1.0 / (b * b)) * G[j][k];
        f.q1[j] = cplx(eps / b) * Dv[j];
    }
    return f;
}

Jet taylorize(const Jet& f, int n0) {
    if (n0 < 1) throw std::invalid_argument("taylorize: N0 must be >= 1");
    const JetSpace& sp = f.space();
    Jet out = f;
    for (int i = 0; i < sp.size(); ++i)
        if (sp.deg[i] > n0 - 1) out.coeffs()[i] = 0.0;
    return out;
}

FieldJets taylorize(const FieldJets& f, int n0) {
    FieldJets out = f;
    for (auto& h : out.h) h = taylorize(h, n0);
    out.d = taylorize(out.d, n0);
    for (auto& row : out.q2)
        for (auto& q : row) q = taylorize(q, n0);
    for (auto& q : out.q1) q = taylorize(q, n0);
    return out;
}

TransportField::TransportField(const BeamPhase& beam, int order) : beam_(&beam), order_(order) {
    if (order_ > beam.jet_order() - 1)
        throw std::invalid_argument("TransportField: order exceeds beam jet data");
}

FieldJets TransportField::at(double theta) const {
    return build_field_jets(beam_->pert(), beam_->at(theta), order_);
}

namespace {

VectorXd pack_cmatrix(const MatrixXcd& M) {
    const long n = M.rows(), m = M.cols();
    VectorXd y(2 * n * m);
    long idx = 0;
    for (long j = 0; j < m; ++j)
        for (long i = 0; i < n; ++i) {
            y[idx++] = M(i, j).real();
            y[idx++] = M(i, j).imag();
        }
    return y;
}

MatrixXcd unpack_cmatrix(const VectorXd& y, long n, long m) {
    MatrixXcd M(n, m);
    long idx = 0;
    for (long j = 0; j < m; ++j)
        for (long i = 0; i < n; ++i) {
            M(i, j) = cplx(y[idx], y[idx + 1]);
            idx += 2;
        }
    return M;
}

}  // namespace

MatrixXcd fundamental_matrix(const std::function<MatrixXcd(double)>& H, int n, double theta0,
                             double theta, double tol) {
    if (theta == theta0) return MatrixXcd::Identity(n, n);
    auto rhs = [&](double t, const VectorXd& y, VectorXd& dy) {
        MatrixXcd Y = unpack_cmatrix(y, n, n);
        dy = pack_cmatrix(MatrixXcd(H(t) * Y));
    };
    ode::Options opt;
    opt.rtol = tol;
    opt.atol = tol * 1e-2;
    opt.store_dense = false;
    auto sol = ode::integrate(rhs, theta0, pack_cmatrix(MatrixXcd::Identity(n, n)), theta, opt);
    if (!sol.ok) throw std::runtime_error("fundamental_matrix: " + sol.message);
    return unpack_cmatrix(sol.y_end, n, n);
}

MatrixXcd fundamental_matrix(const TransportField& field, double theta0, double theta, double tol) {
    auto H = [&](double t) { return field.at(t).H(); };
    return fundamental_matrix(H, field.dim(), theta0, theta, tol);
}

// --- straightened chart -----------------------------------------------------

StraightenedChart::StraightenedChart(const TransportField& field, double theta_lo, double theta_hi,
                                     double delta, double tol, int probes)
    : field_(&field), th_lo_(theta_lo), th_hi_(theta_hi), tol_(tol) {
    // measured sup of ‖Y(θ,0)‖ over the span
    M0_ = 1.0;
    const int m = 16;
    for (int i = 0; i <= m; ++i) {
        const double th = theta_lo + (theta_hi - theta_lo) * double(i) / m;
        M0_ = std::max(M0_, Y(th, 0.0).norm());
    }
    // largest dyadic η <= δ with a verified contraction of the fixed-point map
    // and |z(θ,y)| <= 2 M0 η on probe points
    Rng rng(20240915);
    const int n = field.dim();
    eta_ = delta;
    for (int attempt = 0; attempt < 12; ++attempt) {
        bool ok = true;
        double worst_ratio = 0.0;
        for (int p = 0; p < probes && ok; ++p) {
            VectorXcd y1(n), y2(n);
            for (int j = 0; j < n; ++j) {
                y1[j] = cplx(rng.uniform(-1, 1), rng.uniform(-1, 1));
                y2[j] = cplx(rng.uniform(-1, 1), rng.uniform(-1, 1));
            }
            y1 *= eta_ * rng.uniform(0.2, 1.0) / std::max(1e-9, y1.norm());
            y2 *= eta_ * rng.uniform(0.2, 1.0) / std::max(1e-9, y2.norm());
            const double th = p % 2 == 0 ? theta_hi : theta_lo;
            if (th == 0.0) continue;
            VectorXcd z1, z2;
            try {
                z1 = z_of_unchecked(th, y1);
                z2 = z_of_unchecked(th, y2);
            } catch (const std::exception&) {
                ok = false;
                break;
            }
            if (z1.norm() > 2.0 * M0_ * eta_ || z2.norm() > 2.0 * M0_ * eta_) {
                ok = false;
                break;
            }
            // contraction of F(y) = Y(θ,0)^{-1}[z(θ,y) - Y(θ,0)y] shifts:
            // |(z1-z2) - Y(y1-y2)| <= q |y1-y2| with q < 1/2
            MatrixXcd Yt = Y(th, 0.0);
            const double num = (z1 - z2 - Yt * (y1 - y2)).norm();
            const double den = (y1 - y2).norm();
            if (den > 1e-12) worst_ratio = std::max(worst_ratio, M0_ * num / den);
        }
        if (ok && worst_ratio < 0.5) break;
        eta_ *= 0.5;
        if (attempt == 11) throw std::runtime_error("straighten: no admissible η found");
    }
}

VectorXcd StraightenedChart::z_of(double theta, const VectorXcd& y) const {
    if (y.norm() > eta_ * (1.0 + 1e-12))
        throw std::domain_error("straighten: |y| exceeds the certified radius η");
    return z_of_unchecked(theta, y);
}

VectorXcd StraightenedChart::z_of_unchecked(double theta, const VectorXcd& y) const {
    const int n = field_->dim();
    if (theta == 0.0) return y;
    auto rhs = [&](double t, const VectorXd& s, VectorXd& ds) {
        MatrixXcd z = unpack_cmatrix(s, n, 1);
        FieldJets f = field_->at(t);
        MatrixXcd dz(n, 1);
        for (int j = 0; j < n; ++j) dz(j, 0) = f.h[j].eval(VectorXcd(z.col(0)));
        ds = pack_cmatrix(dz);
    };
    ode::Options opt;
    opt.rtol = tol_;
    opt.atol = tol_ * 1e-2;
    opt.store_dense = false;
    auto sol = ode::integrate(rhs, 0.0, pack_cmatrix(MatrixXcd(y)), theta, opt);
    if (!sol.ok) throw std::runtime_error("straighten: " + sol.message);
    return unpack_cmatrix(sol.y_end, n, 1).col(0);
}

MatrixXcd StraightenedChart::dz_dy(double theta, const VectorXcd& y) const {
    const int n = field_->dim();
    // augmented complex state (z, ∂z/∂y)
    auto rhs = [&](double t, const VectorXd& s, VectorXd& ds) {
        MatrixXcd zJ = unpack_cmatrix(s, n, 1 + n);
        FieldJets f = field_->at(t);
        VectorXcd z = zJ.col(0);
        MatrixXcd J = zJ.rightCols(n);
        MatrixXcd dh(n, n);
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) dh(j, k) = f.h[j].derivative(k).eval(z);
        MatrixXcd out(n, 1 + n);
        for (int j = 0; j < n; ++j) out(j, 0) = f.h[j].eval(z);
        out.rightCols(n) = dh * J;
        ds = pack_cmatrix(out);
    };
    MatrixXcd s0(n, 1 + n);
    s0.col(0) = y;
    s0.rightCols(n) = MatrixXcd::Identity(n, n);
    ode::Options opt;
    opt.rtol = tol_;
    opt.atol = tol_ * 1e-2;
    opt.store_dense = false;
    auto sol = ode::integrate(rhs, 0.0, pack_cmatrix(s0), theta, opt);
    if (!sol.ok) throw std::runtime_error("straighten jacobian: " + sol.message);
    return unpack_cmatrix(sol.y_end, n, 1 + n).rightCols(n);
}

VectorXcd StraightenedChart::kappa(double theta, const VectorXcd& z) const {
    VectorXcd y = z;  // initial guess
    if (y.norm() > eta_) y *= eta_ / y.norm() * 0.9;
    for (int it = 0; it < 50; ++it) {
        VectorXcd zi = z_of_unchecked(theta, y);
        VectorXcd r = zi - z;
        if (r.norm() < 1e-11) return y;
        MatrixXcd J = dz_dy(theta, y);
        VectorXcd step = J.fullPivLu().solve(r);
        // keep the iterate inside the certified ball
        double s = 1.0;
        while ((y - s * step).norm() > eta_ && s > 1e-4) s *= 0.5;
        y -= s * step;
    }
    throw std::runtime_error("straighten: κ Newton iteration failed to converge");
}

MatrixXcd StraightenedChart::Y(double theta, double theta0) const {
    return fundamental_matrix(*field_, theta0, theta, tol_);
}

VectorXcd straighten(const StraightenedChart& chart, double theta, const VectorXcd& y) {
    return chart.z_of(theta, y);
}

// --- amplitude hierarchy -----------------------------------------------------

AmplitudeSystem::AmplitudeSystem(const MetricPerturbation& p, int jet_order, int top_index)
    : pert(&p), n(p.dim()), order(jet_order), n_terms(top_index),
      sp(&JetSpace::get(p.dim(), jet_order)) {}

VectorXd AmplitudeSystem::initial_state() const {
    AmplitudeState s;
    s.Z.resize(n, Jet(*sp));
    for (int j = 0; j < n; ++j) s.Z[j] = Jet::coordinate(*sp, j, 0.0);
    s.I = Jet(*sp);
    s.J.assign(n_terms, Jet(*sp));
    VectorXd y(state_size());
    pack(s, y);
    return y;
}

void AmplitudeSystem::pack(const AmplitudeState& s, VectorXd& y) const {
    const int sz = sp->size();
    y.resize(state_size());
    long off = 0;
    auto put = [&](const Jet& j) {
        for (int i = 0; i < sz; ++i) {
            y[off + i] = j.coeffs()[i].real();
            y[off + sz + i] = j.coeffs()[i].imag();
        }
        off += 2 * sz;
    };
    for (int j = 0; j < n; ++j) put(s.Z[j]);
    put(s.I);
    for (int l = 0; l < n_terms; ++l) put(s.J[l]);
}

AmplitudeState AmplitudeSystem::unpack(const VectorXd& y) const {
    const int sz = sp->size();
    AmplitudeState s;
    long off = 0;
    auto get = [&]() {
        Jet j(*sp);
        for (int i = 0; i < sz; ++i) j.coeffs()[i] = cplx(y[off + i], y[off + sz + i]);
        off += 2 * sz;
        return j;
    };
    s.Z.resize(n, Jet(*sp));
    for (int j = 0; j < n; ++j) s.Z[j] = get();
    s.I = get();
    s.J.assign(n_terms, Jet(*sp));
    for (int l = 0; l < n_terms; ++l) s.J[l] = get();
    return s;
}

namespace {

/// Q applied to a z-jet with the field coefficients.
Jet apply_Q(const FieldJets& f, const Jet& g) {
    const int n = int(f.h.size());
    Jet out(g.space());
    for (int j = 0; j < n; ++j) {
        Jet gj = g.derivative(j);
        out += jets::jet_multiply(f.q1[j], gj);
        for (int k = 0; k < n; ++k) out += jets::jet_multiply(f.q2[j][k], gj.derivative(k));
    }
    return out;
}

}  // namespace

void AmplitudeSystem::rhs(const FieldJets& f, const VectorXd& y, VectorXd& dy) const {
    AmplitudeState s = unpack(y);
    AmplitudeState ds;
    const VectorXcd zero_base = VectorXcd::Zero(n);
    // Z' = h(θ, Z)
    ds.Z.resize(n, Jet(*sp));
    for (int j = 0; j < n; ++j) {
        ds.Z[j] = jets::jet_compose(f.h[j], s.Z, zero_base);
        ds.Z[j].coeffs()[0] = 0.0;  // z(θ,0) = 0 on the numerical ray
    }
    // I' = d(θ, Z)
    ds.I = jets::jet_compose(f.d, s.Z, zero_base);
    // J_ℓ' = i (Q̃ Ã_{ℓ-1}) e^{I}, with Q̃g(y) = (Q [g∘κ])(Z(y))
    ds.J.assign(n_terms, Jet(*sp));
    if (n_terms > 0) {
        std::vector<Jet> kappa = jets::jet_invert_map(s.Z);
        Jet expI = jets::jet_exp(s.I);
        Jet expmI = jets::jet_exp(cplx(-1.0) * s.I);
        Jet Aprev = expmI;  // Ã_0
        for (int l = 0; l < n_terms; ++l) {
            if (l > 0) Aprev = jets::jet_multiply(expmI, s.J[l - 1]);
            Jet g_z = jets::jet_compose(Aprev, kappa, zero_base);  // Ã_{l-1}∘κ in z
            Jet Qg = apply_Q(f, g_z);
            Jet back = jets::jet_compose(Qg, s.Z, zero_base);
            ds.J[l] = cplx(0.0, 1.0) * jets::jet_multiply(back, expI);
        }
    }
    pack(ds, dy);
}

std::vector<Jet> AmplitudeSystem::a_terms(const AmplitudeState& s) const {
    const VectorXcd zero_base = VectorXcd::Zero(n);
    std::vector<Jet> kappa = jets::jet_invert_map(s.Z);
    Jet expmI = jets::jet_exp(cplx(-1.0) * s.I);
    std::vector<Jet> A;
    A.push_back(jets::jet_compose(expmI, kappa, zero_base));  // A_0
    for (int l = 0; l < n_terms; ++l) {
        Jet At = jets::jet_multiply(expmI, s.J[l]);
        A.push_back(jets::jet_compose(At, kappa, zero_base));
    }
    return A;
}

AmplitudeJet::AmplitudeJet(const BeamPhase& beam, int n_terms, int order, double tol)
    : beam_(&beam), sys_(beam.pert(), order, n_terms + 1), N_(n_terms) {
    y0_ = sys_.initial_state();
    auto rhs = [this](double t, const VectorXd& y, VectorXd& dy) {
        FieldJets f = build_field_jets(*sys_.pert, beam_->at(t), sys_.order);
        sys_.rhs(f, y, dy);
    };
    ode::Options opt;
    opt.rtol = tol;
    opt.atol = tol * 1e-2;
    if (beam.theta_max() > 0) {
        fwd_ = ode::integrate(rhs, 0.0, y0_, beam.theta_max(), opt);
        if (!fwd_.ok) throw std::runtime_error("amplitude transport: " + fwd_.message);
    }
    if (beam.theta_min() < 0) {
        bwd_ = ode::integrate(rhs, 0.0, y0_, beam.theta_min(), opt);
        if (!bwd_.ok) throw std::runtime_error("amplitude transport: " + bwd_.message);
    }
}

VectorXd AmplitudeJet::state_at(double theta) const {
    if (theta > 1e-300 && !fwd_.steps.empty()) return fwd_.eval(theta);
    if (theta < -1e-300 && !bwd_.steps.empty()) return bwd_.eval(theta);
    return y0_;
}

std::vector<Jet> AmplitudeJet::terms_at(double theta) const {
    return sys_.a_terms(sys_.unpack(state_at(theta)));
}

cplx AmplitudeJet::term(int ell, double theta, const VectorXcd& z) const {
    auto A = terms_at(theta);
    return A[ell].eval(z);
}

cplx AmplitudeJet::e_value(double theta, const VectorXcd& z, double lambda, int K) const {
    if (K < 0) K = N_;
    auto A = terms_at(theta);
    cplx s = 0.0;
    double lp = 1.0;
    for (int l = 0; l <= std::min(K, int(A.size()) - 1); ++l) {
        s += A[l].eval(z) * lp;
        lp /= lambda;
    }
    return s;
}

cplx AmplitudeJet::a_value(double theta, const VectorXd& x, double lambda, int K) const {
    const double b = jbrack(theta);
    VectorXcd z = ((x - beam_->ray_x(theta)) / b).cast<cplx>();
    return std::pow(1.0 + theta * theta, -0.25 * beam_->dim()) * e_value(theta, z, lambda, K);
}

AmplitudeJet amplitude_terms(const BeamPhase& beam, int n_terms, int order, double tol) {
    return AmplitudeJet(beam, n_terms, order, tol);
}

double transport_residual(const BeamPhase& beam, const AmplitudeJet& ampl, double lambda,
                          double theta, const VectorXd& x, int K) {
    if (K < 0) K = ampl.n_terms();
    const int n = beam.dim();
    const auto& pert = beam.pert();
    const double b = jbrack(theta);
    PhaseJetData d = beam.at(theta);
    VectorXcd u = (x - d.x).cast<cplx>();
    VectorXcd z = u / b;

    // phase pieces
    VectorXcd Phi(n);
    MatrixXcd D2(n, n);
    for (int j = 0; j < n; ++j) {
        Jet dj = d.psi.derivative(j);
        Phi[j] = dj.eval(u);
        for (int k = 0; k < n; ++k) D2(j, k) = dj.derivative(k).eval(u);
    }
    // ∂_θφ = -p_jet(u), so ∂_θφ + p(x,Φ) = p_exact - p_jet:
    const cplx eik_res = pert.eval_symbol(x, Phi) - beam.system().composed_symbol(d).eval(u);

    // amplitude values and derivatives at z (term sum with weights λ^{-ℓ})
    auto A = ampl.terms_at(theta);
    auto fsum = [&](const std::function<cplx(const Jet&)>& g) {
        cplx s = 0.0;
        double lp = 1.0;
        for (int l = 0; l <= K; ++l) {
            s += g(A[l]) * lp;
            lp /= lambda;
        }
        return s;
    };
    const cplx f0 = fsum([&](const Jet& a) { return a.eval(z); });
    VectorXcd fz(n);
    MatrixXcd fzz(n, n);
    for (int j = 0; j < n; ++j) {
        fz[j] = fsum([&](const Jet& a) { return a.derivative(j).eval(z); });
        for (int k = 0; k < n; ++k)
            fzz(j, k) = fsum([&](const Jet& a) { return a.derivative(j).derivative(k).eval(z); });
    }
    // ∂_θ f at fixed z by central differencing of the dense hierarchy
    const double dth = 1e-4 * jbrack(theta);
    const double thp = theta + dth, thm = theta - dth;
    cplx fp = 0.0, fm = 0.0;
    {
        auto Ap = ampl.terms_at(thp);
        auto Am = ampl.terms_at(thm);
        double lp = 1.0;
        for (int l = 0; l <= K; ++l) {
            fp += Ap[l].eval(z) * lp;
            fm += Am[l].eval(z) * lp;
            lp /= lambda;
        }
    }
    const cplx df_dtheta = (fp - fm) / (2.0 * dth);

    // a(θ,x) = b^{-n/2} f(θ, (x-x(θ))/b)
    const double pref = std::pow(b, -double(n) / 2.0);
    const cplx a0 = pref * f0;
    VectorXcd ax = (pref / b) * fz;
    MatrixXcd axx = (pref / (b * b)) * fzz;
    // ∂_θ a at fixed x: chain rule through z(θ,x) = (x - x(θ))/b
    VectorXd gx(n), gxi(n);
    pert.grad_symbol(d.x, d.xi, gx, gxi);
    VectorXcd dz_dth = (-gxi.cast<cplx>() / b) - (theta / (b * b)) * z;
    cplx da_dtheta = pref * df_dtheta - (0.5 * n * theta / (b * b)) * a0;
    for (int j = 0; j < n; ++j) da_dtheta += pref * fz[j] * dz_dth[j];

    // operator assembly (see the divergence-form expansion of ᵗP = P):
    //  b_N = -λ²(∂_θφ + p(x,Φ)) a + iλ[∂_θa + 2ΣgΦ∂a + (Σg∂²φ)a + (ΣD_jΦ_j)ε a]
    //        + Σ_jk ∂_j(g^{jk} ∂_k a)
    MatrixXd G = MatrixXd::Identity(n, n) + pert.epsilon() * pert.coeff_matrix(x);
    VectorXd Dv = pert.epsilon() * pert.div_coeff(x);
    cplx first = 0.0, second = 0.0, zero_order = 0.0;
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
            first += 2.0 * G(j, k) * Phi[j] * ax[k];
            zero_order += G(j, k) * D2(j, k);
            second += G(j, k) * axx(j, k);
        }
        second += Dv[j] * ax[j];  // Σ_j (Σ_k ∂_k g^{kj}) ∂_j a
    }
    cplx div_phi = 0.0;
    for (int j = 0; j < n; ++j) div_phi += Dv[j] * Phi[j];

    const cplx bN = -lambda * lambda * eik_res * a0 +
                    cplx(0.0, lambda) * (da_dtheta + first + (zero_order + div_phi) * a0) + second;
    return std::abs(bN);
}

double hierarchy_residual(const AmplitudeJet& ampl, const TransportField& field, int ell,
                          double theta, const VectorXcd& z, double dtheta) {
    FieldJets f = field.at(theta);
    auto A = ampl.terms_at(theta);
    auto Ap = ampl.terms_at(theta + dtheta);
    auto Am = ampl.terms_at(theta - dtheta);
    const cplx dA = (Ap[ell].eval(z) - Am[ell].eval(z)) / (2.0 * dtheta);
    cplx adv = 0.0;
    const int n = int(f.h.size());
    for (int j = 0; j < n; ++j) adv += f.h[j].eval(z) * A[ell].derivative(j).eval(z);
    const cplx L = dA + adv + f.d.eval(z) * A[ell].eval(z);
    cplx rhs = 0.0;
    if (ell >= 1) rhs = cplx(0.0, 1.0) * apply_Q(f, A[ell - 1]).eval(z);
    return std::abs(L - rhs);
}

}  // namespace beamlab::transport
