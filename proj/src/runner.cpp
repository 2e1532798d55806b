#include "beamlab/runner.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "beamlab/kernel.hpp"

namespace beamlab::runner {

namespace fs = std::filesystem;
using config::ExperimentConfig;
using config::json;

void parallel_for(long count, int workers, const std::function<void(long)>& fn) {
    workers = std::max(1, workers);
    if (workers == 1) {
        for (long i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<long> next(0);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&]() {
            for (;;) {
                const long i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    for (auto& th : pool) th.join();
}

namespace {

struct Csv {
    std::ofstream out;
    explicit Csv(const fs::path& p, const std::string& header) : out(p) {
        if (!out) throw std::runtime_error("cannot write " + p.string());
        out << header << "\n";
    }
    static std::string num(double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return buf;
    }
    void row(const std::vector<double>& vals, const std::vector<std::string>& tail = {}) {
        for (size_t i = 0; i < vals.size(); ++i) out << (i ? "," : "") << num(vals[i]);
        for (const auto& t : tail) out << "," << t;
        out << "\n";
    }
};

struct Manifest {
    json j;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    Manifest(const std::string& sub, const ExperimentConfig& cfg) {
        j["subcommand"] = sub;
        j["config_hash"] = config::fnv1a(cfg.canonical());
        j["version"] = "beamlab 0.1";
    }
    void finish(const fs::path& dir, const json& extra = json::object()) {
        j["elapsed_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = *it;
        std::ofstream out(dir / "manifest.json");
        out << j.dump(2) << "\n";
    }
};

symbols::MetricPerturbation make_pert(const ExperimentConfig& c) {
    return symbols::builtin_family(c.family, c.n, c.epsilon, c.sigma0, c.amplitude);
}

fbi::CutoffFamily make_cut(const ExperimentConfig& c) {
    VectorXd xi0(c.n);
    for (int i = 0; i < c.n; ++i) xi0[i] = c.xi0[i];
    return fbi::make_cutoffs(xi0, c.delta1, c.delta2, c.delta, c.c0);
}

flow::PhasePoint random_seed_point(Rng& rng, int n, bool outgoing_plus) {
    for (;;) {
        VectorXd x = rng.uniform_vec(n, -10.0, 10.0);
        VectorXd xi = rng.uniform(0.5, 2.0) * rng.sphere(n);
        flow::PhasePoint a(x, xi);
        if (!outgoing_plus) return a;
        if (flow::classify_point(a, 0.1).in_S_plus) return a;
    }
}

int cmd_certify(const ExperimentConfig& cfg, const fs::path& out) {
    auto pert = make_pert(cfg);
    Csv csv(out / "certify.csv", "order,max_ratio,bound,pass");
    for (const auto& o : pert.certification().orders)
        csv.row({double(o.order), o.max_ratio, o.bound, double(o.pass)});
    Manifest m("certify", cfg);
    json extra;
    extra["certified"] = pert.certified();
    extra["sandwich"] = {pert.certification().sandwich_low, pert.certification().sandwich_high};
    if (!pert.certified()) {
        extra["violated_order"] = pert.certification().first_failed_order();
        std::fprintf(stderr, "certification FAILED at derivative order %d\n",
                     pert.certification().first_failed_order());
    }
    m.finish(out, extra);
    return pert.certified() ? 0 : 2;
}

int cmd_flow(const ExperimentConfig& cfg, const fs::path& out, int workers) {
    auto pert = make_pert(cfg);
    const int seeds = 50;
    struct Row {
        std::vector<std::vector<double>> vals;
        std::vector<std::string> cls;
    };
    std::vector<Row> rows(seeds);
    parallel_for(seeds, workers, [&](long s) {
        Rng rng(cfg.seed + 1000 * s);
        flow::PhasePoint a = random_seed_point(rng, cfg.n, false);
        auto c = flow::classify_point(a, cfg.c0);
        const bool fwd = c.in_S_plus;
        flow::Trajectory tr = flow::integrate_flow(pert, a, fwd ? 0.0 : -50.0, fwd ? 50.0 : 0.0,
                                                   cfg.flow_tol);
        const double bound = (2e2 / cfg.sigma0) * cfg.epsilon * pert.max_a01();
        for (int i = 1; i <= 20; ++i) {
            const double t = (fwd ? 1.0 : -1.0) * 50.0 * i / 20.0;
            VectorXd x, xi;
            tr.eval(t, x, xi);
            VectorXd z = x - a.x - 2.0 * t * xi;
            rows[s].vals.push_back({double(s), t, x[0], xi[0], tr.energy_drift(t),
                                    bound > 0 ? z.cwiseAbs().maxCoeff() / bound : 0.0});
            rows[s].cls.push_back(c.domain_case == flow::Classification::OutgoingBoth ? "case1"
                                  : c.domain_case == flow::Classification::CaseII     ? "case2"
                                                                                      : "case3");
        }
    });
    Csv csv(out / "flow.csv", "seed,t,x0,xi0,energy_drift,z_over_bound,class");
    for (auto& r : rows)
        for (size_t i = 0; i < r.vals.size(); ++i) csv.row(r.vals[i], {r.cls[i]});
    Manifest("flow", cfg).finish(out);
    return 0;
}

int cmd_classify(const ExperimentConfig& cfg, const fs::path& out) {
    Csv csv(out / "classify.csv", "x0,xi0,in_S_plus,in_S_minus,case");
    Rng rng(cfg.seed);
    for (int i = 0; i < 200; ++i) {
        flow::PhasePoint a = random_seed_point(rng, cfg.n, false);
        auto c = flow::classify_point(a, cfg.c0);
        csv.row({a.x[0], a.xi[0], double(c.in_S_plus), double(c.in_S_minus)},
                {c.domain_case == flow::Classification::OutgoingBoth ? "i"
                 : c.domain_case == flow::Classification::CaseII     ? "ii"
                                                                     : "iii"});
    }
    Manifest("classify", cfg).finish(out);
    return 0;
}

int cmd_phase(const ExperimentConfig& cfg, const fs::path& out) {
    auto pert = make_pert(cfg);
    Rng rng(cfg.seed);
    flow::PhasePoint a = random_seed_point(rng, cfg.n, true);
    phase::BeamPhase beam(pert, a, -20.0, 20.0, cfg.n_jet, cfg.beam_tol, cfg.delta_domain, cfg.c0,
                          cfg.c1);
    Csv csv(out / "phase.csv", "theta,immin,immax,residual_slope,im_margin");
    for (int i = 0; i <= 20; ++i) {
        const double th = -20.0 + 40.0 * i / 20.0;
        phase::PhaseJetData d = beam.at(th);
        MatrixXcd M = d.hessian();
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(M.imag());
        const double f = 1.0 + 4.0 * th * th;
        VectorXd dir = rng.sphere(cfg.n);
        const double slope = beam.residual_slope(th, dir, 1e-2, 1e-1, 7);
        Rng r2(cfg.seed + i);
        auto rep = check_imphase(beam, std::abs(th) + 0.1, 200, r2);
        csv.row({th, es.eigenvalues().minCoeff() * f, es.eigenvalues().maxCoeff() * f, slope,
                 rep.min_margin});
    }
    Manifest("phase", cfg).finish(out);
    return 0;
}

int cmd_amplitude(const ExperimentConfig& cfg, const fs::path& out) {
    auto pert = make_pert(cfg);
    Rng rng(cfg.seed);
    flow::PhasePoint a = random_seed_point(rng, cfg.n, true);
    phase::BeamPhase beam(pert, a, 0.0, 30.0, cfg.n_jet, cfg.beam_tol, cfg.delta_domain, cfg.c0,
                          cfg.c1);
    transport::AmplitudeJet ampl(beam, cfg.n_amp, cfg.n0 - 1, cfg.beam_tol);
    const double lambda = cfg.lambdas.empty() ? 128.0 : cfg.lambdas.front();
    Csv csv(out / "amplitude.csv", "theta,onray_scaled,residual");
    for (int i = 1; i <= 15; ++i) {
        const double th = 30.0 * i / 15.0;
        VectorXd x = beam.ray_x(th);
        const double av = std::abs(ampl.a_value(th, x, lambda));
        const double res = transport::transport_residual(beam, ampl, lambda, th, x);
        csv.row({th, av * std::pow(jbrack(th), 0.5 * cfg.n), res});
    }
    Manifest("amplitude", cfg).finish(out);
    return 0;
}

int cmd_fbi_check(const ExperimentConfig& cfg, const fs::path& out) {
    auto cut = make_cut(cfg);
    const double lam = 64.0;
    fbi::SpatialGrid g = fbi::SpatialGrid::line(-8, 16, 2048);
    fbi::SpatialField u(g);
    for (long i = 0; i < g.size(); ++i) {
        VectorXd y = g.point(i);
        u.v[i] = std::exp(cplx(-0.5 * lam * y.squaredNorm(), lam * 1.2 * y[0]));
    }
    u.v /= u.l2();
    fbi::AlphaGrid ag = fbi::make_alpha_grid(g, lam, 2.5, 3.0);
    fbi::FBIField w = fbi::fbi_forward(u, lam, ag);
    const double iso = std::abs(w.weighted_l2() - u.l2()) / u.l2();
    const double inv = fbi::check_inversion(u, lam, ag);
    auto fit = fbi::microlocal_mismatch(cut, {64, 128, 256, 512});
    json j;
    j["isometry_error"] = iso;
    j["inversion_error"] = inv;
    j["mismatch_slope"] = fit.slope;
    j["mismatch_ratios"] = fit.ratios;
    std::ofstream(out / "fbi-check.json") << j.dump(2) << "\n";
    Manifest("fbi-check", cfg).finish(out);
    return 0;
}

int cmd_kernel(const ExperimentConfig& cfg, const fs::path& out, int workers) {
    auto pert = make_pert(cfg);
    auto cut = make_cut(cfg);
    kernel::SweepResult sw = kernel::dispersion_sweep(
        pert, cut, {cfg.lambdas.front()}, {cfg.lambda_t.front()}, cfg.y_values, cfg.s_points);
    (void)workers;
    Csv csv(out / "kernel.csv", "t,lambda,x,y,re_k,im_k,scaled,err,converged,regime");
    for (const auto& row : sw.rows)
        for (const auto& ks : row.samples)
            csv.row({ks.t, ks.lambda, ks.x[0], ks.y[0], ks.k.real(), ks.k.imag(),
                     std::abs(ks.k) * std::sqrt(std::abs(ks.t)), ks.err, double(ks.converged)},
                    {ks.regime});
    Manifest("kernel", cfg).finish(out);
    return 0;
}

int cmd_dispersion(const ExperimentConfig& cfg, const fs::path& out, int workers) {
    auto pert = make_pert(cfg);
    auto cut = make_cut(cfg);
    (void)workers;
    kernel::SweepResult sw = kernel::dispersion_sweep(pert, cut, cfg.lambdas, cfg.lambda_t,
                                                      cfg.y_values, cfg.s_points);
    Csv csv(out / "dispersion.csv", "t,lambda,sup_scaled,flagged,regime");
    for (const auto& row : sw.rows)
        csv.row({row.t, row.lambda, row.sup_scaled, double(row.flagged)}, {row.regime});
    Manifest m("dispersion", cfg);
    json extra;
    extra["max_over_median"] = sw.max_over_median;
    extra["pass"] = sw.pass;
    m.finish(out, extra);
    return sw.pass ? 0 : 3;
}

int cmd_strichartz(const ExperimentConfig& cfg, const fs::path& out) {
    auto pert = make_pert(cfg);
    reference::StrichartzPair pair(cfg.q, cfg.r, cfg.n);
    Csv csv(out / "strichartz.csv", "lambda,mixed_norm,ratio");
    std::vector<double> ratios;
    for (double lam : cfg.lambdas) {
        fbi::SpatialGrid g = reference::reference_grid(cfg.n, lam, cfg.T);
        VectorXd x0 = VectorXd::Zero(cfg.n), s0(cfg.n);
        for (int i = 0; i < cfg.n; ++i) s0[i] = 1.2 * cfg.xi0[i];
        fbi::SpatialField u0 = reference::wave_packet(g, lam, x0, s0);
        reference::EvolveOptions eo;
        eo.tol = cfg.evolve_tol;
        const double nrm = reference::strichartz_norm(pert, u0, pair, cfg.T, 64, eo);
        ratios.push_back(nrm);
        csv.row({lam, nrm, nrm});
    }
    Manifest m("strichartz", cfg);
    json extra;
    const double mx = *std::max_element(ratios.begin(), ratios.end());
    const double mn = *std::min_element(ratios.begin(), ratios.end());
    extra["uniformity"] = mx / std::max(mn, 1e-300);
    m.finish(out, extra);
    return 0;
}

int cmd_compare(const ExperimentConfig& cfg, const fs::path& out) {
    auto pert = make_pert(cfg);
    auto cut = make_cut(cfg);
    Csv csv(out / "compare.csv", "t,lambda,rel_l2");
    for (double lam : cfg.lambdas) {
        fbi::SpatialGrid g = reference::reference_grid(cfg.n, lam, 0.12);
        VectorXd x0 = VectorXd::Constant(cfg.n, 0.5), s0(cfg.n);
        for (int i = 0; i < cfg.n; ++i) s0[i] = 1.2 * cfg.xi0[i];
        fbi::SpatialField u0 = reference::wave_packet(g, lam, x0, s0);
        for (double t : {0.02, 0.05, 0.1}) {
            auto r = kernel::compare_parametrix(pert, cut, u0, t, lam);
            csv.row({r.t, r.lambda, r.rel_l2});
        }
    }
    Manifest("compare", cfg).finish(out);
    return 0;
}

int cmd_evolve(const ExperimentConfig& cfg, const fs::path& out) {
    auto pert = make_pert(cfg);
    const double lam = cfg.lambdas.empty() ? 64.0 : cfg.lambdas.front();
    fbi::SpatialGrid g = reference::reference_grid(cfg.n, lam, cfg.T);
    VectorXd x0 = VectorXd::Zero(cfg.n), s0(cfg.n);
    for (int i = 0; i < cfg.n; ++i) s0[i] = 1.2 * cfg.xi0[i];
    fbi::SpatialField u0 = reference::wave_packet(g, lam, x0, s0);
    reference::EvolveOptions eo;
    eo.tol = cfg.evolve_tol;
    reference::EvolveStats st;
    Csv csv(out / "evolve.csv", "t,l2,linf,mass_drift");
    std::vector<double> cps;
    for (int i = 1; i <= 16; ++i) cps.push_back(cfg.T * i / 16.0);
    reference::evolve_reference(pert, u0, cfg.T, eo, &st, cps,
                                [&](double t, const fbi::SpatialField& f) {
                                    csv.row({t, f.l2(), f.linf(), std::abs(f.l2() - 1.0)});
                                });
    Manifest m("evolve", cfg);
    json extra;
    extra["steps"] = st.steps;
    extra["mass_drift"] = st.mass_drift;
    m.finish(out, extra);
    return 0;
}

}  // namespace

int run(const RunArgs& args) {
    ExperimentConfig cfg =
        args.config_path.empty() ? ExperimentConfig{} : config::load_config(args.config_path);
    if (args.seed_override) cfg.seed = *args.seed_override;
    cfg.validate();
    fs::path out(args.out_dir);
    fs::create_directories(out);
    const std::string& s = args.subcommand;
    try {
        if (s == "certify") return cmd_certify(cfg, out);
        if (s == "flow") return cmd_flow(cfg, out, args.workers);
        if (s == "classify") return cmd_classify(cfg, out);
        if (s == "phase") return cmd_phase(cfg, out);
        if (s == "amplitude") return cmd_amplitude(cfg, out);
        if (s == "fbi-check") return cmd_fbi_check(cfg, out);
        if (s == "kernel") return cmd_kernel(cfg, out, args.workers);
        if (s == "dispersion") return cmd_dispersion(cfg, out, args.workers);
        if (s == "strichartz") return cmd_strichartz(cfg, out);
        if (s == "compare") return cmd_compare(cfg, out);
        if (s == "evolve") return cmd_evolve(cfg, out);
    } catch (const std::exception& e) {
        json err;
        err["error"] = e.what();
        err["subcommand"] = s;
        std::ofstream(out / "error.json") << err.dump(2) << "\n";
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    std::fprintf(stderr, "unknown subcommand: %s\n", s.c_str());
    return 64;
}

}  // namespace beamlab::runner
