#include "beamlab/reference.hpp"

namespace beamlab::reference {

namespace {

VectorXd pack_c(const VectorXcd& v) {
    return Eigen::Map<const VectorXd>(reinterpret_cast<const double*>(v.data()), 2 * v.size());
}
VectorXcd unpack_c(const VectorXd& y) {
    return Eigen::Map<const VectorXcd>(reinterpret_cast<const cplx*>(y.data()), y.size() / 2);
}

struct SpectralOp {
    const MetricPerturbation* pert;
    SpatialGrid grid;
    int n0, n1;
    VectorXd k2;                      // |k|² per FFT slot
    std::vector<VectorXd> kax;       // k components per slot
    std::vector<VectorXd> bvals;     // b_jk(x) per grid node (flattened per pair)
    int n;

    explicit SpectralOp(const MetricPerturbation& p, const SpatialGrid& g) : pert(&p), grid(g) {
        n = g.n;
        n0 = g.shape[0];
        n1 = n == 2 ? g.shape[1] : 1;
        const long N = g.size();
        k2.resize(N);
        kax.assign(n, VectorXd(N));
        for (long m = 0; m < N; ++m) {
            double s = 0;
            for (int a = 0; a < n; ++a) {
                const double k = n == 1 ? g.freq(0, m) : g.freq(a, a == 0 ? m / n1 : m % n1);
                kax[a][m] = k;
                s += k * k;
            }
            k2[m] = s;
        }
        bvals.assign(size_t(n) * n, VectorXd(N));
        for (long i = 0; i < N; ++i) {
            MatrixXd B = p.coeff_matrix(g.point(i));
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) bvals[a * n + b][i] = B(a, b);
        }
    }

    /// εQ u with Q = -Σ ∂_j(b_jk ∂_k ·), acting on physical-space values.
    VectorXcd apply_epsQ(const VectorXcd& u) const {
        const double eps = pert->epsilon();
        VectorXcd out = VectorXcd::Zero(u.size());
        if (eps == 0.0) return out;
        std::vector<VectorXcd> du(n);
        for (int a = 0; a < n; ++a) {
            VectorXcd h = u;
            fft::forward(h, n0, n1);
            for (long m = 0; m < h.size(); ++m) h[m] *= cplx(0.0, kax[a][m]);
            fft::inverse(h, n0, n1);
            du[a] = std::move(h);
        }
        for (int j = 0; j < n; ++j) {
            VectorXcd m = VectorXcd::Zero(u.size());
            for (int k = 0; k < n; ++k)
                if (pert->epsilon() != 0.0) m += bvals[j * n + k].cast<cplx>().cwiseProduct(du[k]);
            fft::forward(m, n0, n1);
            for (long q = 0; q < m.size(); ++q) m[q] *= cplx(0.0, kax[j][q]);
            fft::inverse(m, n0, n1);
            out -= eps * m;
        }
        return out;
    }

    VectorXcd apply_P_phys(const VectorXcd& u) const {
        VectorXcd h = u;
        fft::forward(h, n0, n1);
        for (long m = 0; m < h.size(); ++m) h[m] *= k2[m];
        fft::inverse(h, n0, n1);
        return h + apply_epsQ(u);
    }
};

}  // namespace

SpatialField apply_P(const MetricPerturbation& pert, const SpatialField& u) {
    SpectralOp op(pert, u.grid);
    SpatialField out = u;
    out.v = op.apply_P_phys(u.v);
    return out;
}

double energy(const MetricPerturbation& pert, const SpatialField& u) {
    SpectralOp op(pert, u.grid);
    VectorXcd Pu = op.apply_P_phys(u.v);
    return (u.v.conjugate().cwiseProduct(Pu)).sum().real() * u.grid.cell();
}

SpatialField evolve_reference(const MetricPerturbation& pert, const SpatialField& u0, double t,
                              const EvolveOptions& opt, EvolveStats* stats,
                              const std::vector<double>& checkpoints,
                              const std::function<void(double, const SpatialField&)>& cb) {
    if (!pert.certified())
        throw std::invalid_argument("evolve_reference: perturbation not certified");
    SpectralOp op(pert, u0.grid);
    const long N = u0.grid.size();
    VectorXcd hat0 = u0.v;
    fft::forward(hat0, op.n0, op.n1);

    const double mass0 = hat0.norm();
    EvolveStats st;
    st.wrap_mass = u0.wraparound_mass();
    if (st.wrap_mass > opt.wrap_abort)
        throw std::runtime_error("evolve_reference: initial data touches the box edge");

    auto to_field = [&](double tt, const VectorXcd& vhat) {
        VectorXcd uh(N);
        for (long m = 0; m < N; ++m) uh[m] = std::exp(cplx(0.0, -op.k2[m] * tt)) * vhat[m];
        fft::inverse(uh, op.n0, op.n1);
        SpatialField f(u0.grid);
        f.v = std::move(uh);
        return f;
    };

    SpatialField result(u0.grid);
    if (pert.epsilon() == 0.0) {
        // free evolution is exact in the spectral representation
        result = to_field(t, hat0);
        if (cb)
            for (double tc : checkpoints) cb(tc, to_field(tc, hat0));
        if (stats) *stats = st;
        return result;
    }

    // Lawson: v̂' = e^{+i|k|²t} F[-iεQ u],  u = F^{-1}[e^{-i|k|²t} v̂]
    auto rhs = [&](double tt, const VectorXd& y, VectorXd& dy) {
        VectorXcd vhat = unpack_c(y);
        VectorXcd uh(N);
        for (long m = 0; m < N; ++m) uh[m] = std::exp(cplx(0.0, -op.k2[m] * tt)) * vhat[m];
        fft::inverse(uh, op.n0, op.n1);
        VectorXcd q = op.apply_epsQ(uh);
        fft::forward(q, op.n0, op.n1);
        for (long m = 0; m < N; ++m) q[m] = std::exp(cplx(0.0, op.k2[m] * tt)) * (cplx(0, -1.0) * q[m]);
        dy = pack_c(q);
    };
    ode::Options oo;
    oo.rtol = opt.tol;
    oo.atol = opt.tol * 1e-2 * std::max(1.0, mass0 / std::sqrt(double(N)));
    oo.store_dense = false;
    const double E0 = energy(pert, u0);
    auto wrapped_cb = [&](double tc, const VectorXd& y) {
        if (!cb) return;
        SpatialField f = to_field(tc, unpack_c(y));
        st.wrap_mass = std::max(st.wrap_mass, f.wraparound_mass());
        st.mass_drift =
            std::max(st.mass_drift, std::abs(f.v.norm() - mass0) * std::sqrt(u0.grid.cell()));
        cb(tc, f);
    };
    auto sol = ode::integrate(rhs, 0.0, pack_c(hat0), t, oo, checkpoints,
                              cb ? std::function<void(double, const VectorXd&)>(wrapped_cb)
                                 : std::function<void(double, const VectorXd&)>());
    if (!sol.ok) throw std::runtime_error("evolve_reference: " + sol.message);
    st.steps = sol.n_steps;
    result = to_field(t, unpack_c(sol.y_end));
    st.mass_drift =
        std::max(st.mass_drift, std::abs(result.v.norm() - mass0) * std::sqrt(u0.grid.cell()));
    st.energy_drift = std::abs(energy(pert, result) - E0);
    st.wrap_mass = std::max(st.wrap_mass, result.wraparound_mass());
    if (st.wrap_mass > opt.wrap_abort)
        throw std::runtime_error("evolve_reference: wraparound contamination (enlarge the box)");
    if (stats) *stats = st;
    return result;
}

SpatialField sandwiched_propagator(const MetricPerturbation& pert, const CutoffFamily& cut,
                                   int sign, const SpatialField& u0, double t, double lambda,
                                   const EvolveOptions& opt) {
    SpatialField w = u0;
    for (long i = 0; i < w.v.size(); ++i) w.v[i] *= cut.chi1(sign, w.grid.point(i));
    w = fbi::frequency_cutoff_apply([&](const VectorXd& k) { return cut.psi2(k); }, lambda, w);
    w = evolve_reference(pert, w, t, opt);
    w = fbi::frequency_cutoff_apply([&](const VectorXd& k) { return cut.psi2(k); }, lambda, w);
    for (long i = 0; i < w.v.size(); ++i) w.v[i] *= cut.chi1(sign, w.grid.point(i));
    return w;
}

double strichartz_norm(const MetricPerturbation& pert, const SpatialField& u0,
                       const StrichartzPair& pair, double T, int t_nodes,
                       const EvolveOptions& opt) {
    if (pair.n != u0.grid.n) throw std::invalid_argument("strichartz_norm: dimension mismatch");
    if (t_nodes % 2 != 0) ++t_nodes;  // Simpson needs an even interval count
    std::vector<double> norms(2 * t_nodes + 1, 0.0);
    // node i in [-T, T]: t_i = -T + i·(T/t_nodes)... use t_nodes intervals per side
    const double ht = T / t_nodes;
    norms[t_nodes] = u0.lr(pair.r);
    for (int dir = 0; dir < 2; ++dir) {
        std::vector<double> cps;
        for (int i = 1; i <= t_nodes; ++i) cps.push_back((dir == 0 ? 1.0 : -1.0) * ht * i);
        auto cb = [&](double tc, const SpatialField& f) {
            const long i = t_nodes + long(std::llround(tc / ht));
            norms[size_t(i)] = f.lr(pair.r);
        };
        evolve_reference(pert, u0, (dir == 0 ? 1.0 : -1.0) * T, opt, nullptr, cps, cb);
    }
    // composite Simpson of ‖u(t)‖_r^q over [-T, T]
    double I = 0.0;
    const int M = 2 * t_nodes;
    for (int i = 0; i <= M; ++i) {
        const double w = (i == 0 || i == M) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        I += w * std::pow(norms[size_t(i)], pair.q);
    }
    I *= ht / 3.0;
    return std::pow(I, 1.0 / pair.q);
}

SpatialGrid reference_grid(int n, double lambda, double T, double data_halfwidth, double b_edge) {
    const double ximax = lambda * b_edge * 1.1;
    const double half = 2.0 * (2.0 * T * ximax) / lambda * lambda;  // classical excursion bound
    double box = 4.0 * 2.0 * T * ximax + 4.0 * data_halfwidth;
    (void)half;
    double hreq = std::min(pi / (1.25 * ximax), 1.0 / (6.5 * std::sqrt(lambda)));
    long N = 1;
    while (box / N > hreq) N *= 2;
    if (n == 1) return SpatialGrid::line(-box / 2, box, int(N));
    // desk scale in 2D: cap the node count per axis
    while (N > 512) N /= 2;
    box = N * hreq;
    return SpatialGrid::plane(-box / 2, box, int(N), -box / 2, box, int(N));
}

SpatialField wave_packet(const SpatialGrid& g, double lambda, const VectorXd& x0,
                         const VectorXd& s0) {
    SpatialField u(g);
    for (long i = 0; i < g.size(); ++i) {
        VectorXd y = g.point(i);
        VectorXd w = y - x0;
        u.v[i] = std::exp(cplx(-0.5 * lambda * w.squaredNorm(), lambda * s0.dot(y)));
    }
    u.v /= u.l2();
    return u;
}

}  // namespace beamlab::reference
