#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "beamlab/jets.hpp"

using namespace beamlab;
using namespace beamlab::jets;

namespace {

Jet poly1(const JetSpace& sp, std::initializer_list<double> coeffs) {
    Jet j(sp);
    int k = 0;
    std::vector<int> e(1, 0);
    for (double c : coeffs) {
        e[0] = k++;
        j.set_coeff(e, c);
    }
    return j;
}

Jet exp_jet(const JetSpace& sp, double rate) {
    // jet of exp(rate·x) at 0
    Jet j(sp);
    std::vector<int> e(1, 0);
    double c = 1.0;
    for (int k = 0; k <= sp.order; ++k) {
        e[0] = k;
        j.set_coeff(e, c);
        c *= rate / double(k + 1);
    }
    return j;
}

}  // namespace

TEST_CASE("jet multiply: (1+x)(1-x) = 1-x^2") {
    const JetSpace& sp = JetSpace::get(1, 2);
    Jet a = poly1(sp, {1.0, 1.0});
    Jet b = poly1(sp, {1.0, -1.0});
    Jet c = jet_multiply(a, b);
    CHECK(std::abs(c.coeff({0}) - 1.0) < 1e-15);
    CHECK(std::abs(c.coeff({1})) < 1e-15);
    CHECK(std::abs(c.coeff({2}) + 1.0) < 1e-15);
}

TEST_CASE("jet multiply: exp squared equals exp(2x) through order 4") {
    const JetSpace& sp = JetSpace::get(1, 4);
    Jet e1 = exp_jet(sp, 1.0);
    Jet sq = jet_multiply(e1, e1);
    Jet e2 = exp_jet(sp, 2.0);
    CHECK((sq.coeffs() - e2.coeffs()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("jet multiply: random cubics against symbolic expansion") {
    Rng rng(42);
    const JetSpace& sp = JetSpace::get(1, 6);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> a(4), b(4);
        for (auto& v : a) v = rng.uniform(-2, 2);
        for (auto& v : b) v = rng.uniform(-2, 2);
        Jet ja = poly1(sp, {a[0], a[1], a[2], a[3]});
        Jet jb = poly1(sp, {b[0], b[1], b[2], b[3]});
        Jet jc = jet_multiply(ja, jb);
        for (int k = 0; k <= 6; ++k) {
            double expect = 0;
            for (int i = 0; i <= k; ++i)
                if (i < 4 && k - i < 4) expect += a[size_t(i)] * b[size_t(k - i)];
            CHECK(std::abs(jc.coeff({k}) - expect) < 1e-13);
        }
    }
}

TEST_CASE("jet compose: identity outer leaves inner unchanged") {
    const JetSpace& spo = JetSpace::get(1, 3);
    const JetSpace& spi = JetSpace::get(2, 3);
    Jet inner(spi);
    inner.set_coeff({0, 0}, 0.7);
    inner.set_coeff({1, 0}, 2.0);
    inner.set_coeff({0, 2}, -1.0);
    Jet outer = Jet::coordinate(spo, 0, 0.7);
    Jet out = jet_compose(outer, {inner}, VectorXcd::Constant(1, 0.7));
    CHECK((out.coeffs() - inner.coeffs()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("jet compose: exp of linear map matches analytic jet") {
    const JetSpace& spo = JetSpace::get(1, 3);
    const JetSpace& spi = JetSpace::get(2, 3);
    Jet outer = exp_jet(spo, 1.0);  // exp around 0
    Jet lin(spi);
    lin.set_coeff({1, 0}, 0.5);
    lin.set_coeff({0, 1}, -0.25);
    Jet out = jet_compose(outer, {lin}, VectorXcd::Zero(1));
    // exp(0.5 u - 0.25 v): coefficient of u^a v^b is 0.5^a (-0.25)^b / (a! b!)
    for (int aa = 0; aa <= 3; ++aa)
        for (int bb = 0; aa + bb <= 3; ++bb) {
            double expect = std::pow(0.5, aa) * std::pow(-0.25, bb);
            for (int i = 2; i <= aa; ++i) expect /= i;
            for (int i = 2; i <= bb; ++i) expect /= i;
            CHECK(std::abs(out.coeff({aa, bb}) - expect) < 1e-13);
        }
}

TEST_CASE("jet compose: order-4 composition matches Richardson finite differences") {
    // f(u) = sin(u) jet at u0, composed with u(x) = polynomial
    Rng rng(7);
    const int N = 4;
    const JetSpace& spo = JetSpace::get(1, N);
    const JetSpace& spi = JetSpace::get(1, N);
    const double u0 = 0.3;
    Jet outer(spo);
    for (int k = 0; k <= N; ++k) {
        // d^k sin at u0 / k!
        const double d = std::sin(u0 + k * pi / 2);
        double f = 1;
        for (int i = 2; i <= k; ++i) f *= i;
        outer.set_coeff({k}, d / f);
    }
    std::vector<double> p = {u0, 1.3, -0.7, 0.4, 0.2};
    Jet inner(spi);
    for (int k = 0; k <= N; ++k) inner.set_coeff({k}, p[size_t(k)]);
    Jet comp = jet_compose(outer, {inner}, VectorXcd::Constant(1, u0));
    auto F = [&](double x) {
        double u = 0;
        for (int k = N; k >= 0; --k) u = u * x + p[size_t(k)];
        return std::sin(u);
    };
    // 4th derivative at 0 by central differences + Richardson
    auto d4 = [&](double h) {
        return (F(2 * h) - 4 * F(h) + 6 * F(0) - 4 * F(-h) + F(-2 * h)) / (h * h * h * h);
    };
    const double rich = (16.0 * d4(5e-3) - d4(1e-2)) / 15.0;
    CHECK(std::abs(comp.coeff({4}).real() * 24.0 - rich) < 1e-4 * (1 + std::abs(rich)));
    // low orders exactly
    CHECK(std::abs(comp.coeff({0}) - std::sin(u0)) < 1e-14);
    CHECK(std::abs(comp.coeff({1}) - std::cos(u0) * 1.3) < 1e-13);
}

TEST_CASE("jet compose is associative up to truncation") {
    Rng rng(11);
    const JetSpace& sp = JetSpace::get(1, 5);
    auto rnd = [&](double v0) {
        Jet j(sp);
        j.set_coeff({0}, v0);
        for (int k = 1; k <= 5; ++k) j.set_coeff({k}, rng.uniform(-0.8, 0.8));
        return j;
    };
    Jet h = rnd(0.2), g = rnd(0.5), f = rnd(-0.1);
    // f∘(g∘h) vs (f∘g)∘h: bases must match values
    Jet gh = jet_compose(g, {h}, VectorXcd::Constant(1, h.value()));
    Jet f_gh = jet_compose(f, {gh}, VectorXcd::Constant(1, gh.value()));
    Jet fg = jet_compose(f, {g}, VectorXcd::Constant(1, g.value()));
    Jet fg_h = jet_compose(fg, {h}, VectorXcd::Constant(1, h.value()));
    const double scale = f_gh.coeffs().cwiseAbs().maxCoeff();
    CHECK((f_gh.coeffs() - fg_h.coeffs()).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, scale));
}

TEST_CASE("jet invert map round trip") {
    Rng rng(3);
    const JetSpace& sp = JetSpace::get(2, 4);
    std::vector<Jet> Z(2, Jet(sp));
    Z[0] = Jet::coordinate(sp, 0, 0.0) * cplx(1.2);
    Z[1] = Jet::coordinate(sp, 1, 0.0) * cplx(0.8);
    Z[0].set_coeff({1, 1}, 0.3);
    Z[1].set_coeff({2, 0}, -0.2);
    Z[0].set_coeff({0, 3}, 0.05);
    auto W = jet_invert_map(Z);
    auto WZ0 = jet_compose(W[0], Z, VectorXcd::Zero(2));
    auto WZ1 = jet_compose(W[1], Z, VectorXcd::Zero(2));
    Jet id0 = Jet::coordinate(sp, 0, 0.0), id1 = Jet::coordinate(sp, 1, 0.0);
    CHECK((WZ0.coeffs() - id0.coeffs()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((WZ1.coeffs() - id1.coeffs()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("power jet derivatives of (1+x^2)^{-3/4}") {
    // compose outer t^{-3/4} with u = 1 + x², compare against finite differences
    const int N = 5;
    const double x0 = 0.7;
    const JetSpace& sp = JetSpace::get(1, N);
    const double u0 = 1 + x0 * x0;
    Jet u(sp);
    u.set_coeff({0}, u0);
    u.set_coeff({1}, 2 * x0);
    u.set_coeff({2}, 1.0);
    Jet w = jet_compose(power_jet(-0.75, u0, N), {u}, VectorXcd::Constant(1, u0));
    auto f = [](double x) { return std::pow(1 + x * x, -0.75); };
    const double h = 1e-3;
    const double d1 = (f(x0 + h) - f(x0 - h)) / (2 * h);
    const double d2 = (f(x0 + h) - 2 * f(x0) + f(x0 - h)) / (h * h);
    CHECK(std::abs(w.coeff({0}).real() - f(x0)) < 1e-14);
    CHECK(std::abs(w.coeff({1}).real() - d1) < 1e-7);
    CHECK(std::abs(2.0 * w.coeff({2}).real() - d2) < 1e-6);
}

// ---------------------------------------------------------------------------

namespace {

/// jet-backed field f(x) = ⟨x⟩^{-1-σ0}
jets::Jet decay_field(const VectorXd& x, int order, double sigma0 = 0.5) {
    const JetSpace& sp = JetSpace::get(int(x.size()), order);
    const double u0 = 1 + x.squaredNorm();
    Jet u(sp);
    u.coeffs()[0] = u0;
    std::vector<int> e(int(x.size()), 0);
    for (int j = 0; j < int(x.size()); ++j) {
        e.assign(x.size(), 0);
        e[j] = 1;
        u.set_coeff(e, 2 * x[j]);
        e[j] = 2;
        u.set_coeff(e, 1.0);
    }
    return jet_compose(power_jet(-(1 + sigma0) / 2, u0, order), {u}, VectorXcd::Constant(1, u0));
}

}  // namespace

TEST_CASE("almost analytic extension: F(x,0) = f(x) exactly") {
    auto field = [](const VectorXd& x, int order) { return decay_field(x, order); };
    std::vector<VectorXd> probes;
    for (double x = 0; x <= 10; x += 0.5) probes.push_back(VectorXd::Constant(1, x));
    jets::AlmostAnalyticExtension F(field, 1, 4, 0.5, probes);
    for (double x : {0.0, 1.3, 3.0, 7.7}) {
        VectorXd xv = VectorXd::Constant(1, x);
        CHECK(std::abs(F.eval(xv, VectorXd::Zero(1)) - std::pow(1 + x * x, -0.75)) == 0.0);
    }
    // scales increasing and >= 1
    double prev = 1.0;
    for (double l : F.scales()) {
        CHECK(l >= prev);
        prev = l;
    }
}

TEST_CASE("almost analytic extension: polynomial is extended holomorphically near 0") {
    // f(x) = 1 + x + x² (degree < N); where the cutoffs are 1 the extension is
    // the complex polynomial and ∂̄F = 0
    auto field = [](const VectorXd& x, int order) {
        const JetSpace& sp = JetSpace::get(1, order);
        Jet j(sp);
        j.set_coeff({0}, 1.0 + x[0] + x[0] * x[0]);
        j.set_coeff({1}, 1.0 + 2 * x[0]);
        j.set_coeff({2}, 1.0);
        return j;
    };
    jets::AlmostAnalyticExtension F(field, 1, 4, {1.0, 1.0, 1.0, 1.0});
    VectorXd x = VectorXd::Constant(1, 0.4), y = VectorXd::Constant(1, 0.2);
    const cplx z(0.4, 0.2);
    CHECK(std::abs(F.eval(x, y) - (1.0 + z + z * z)) < 1e-14);
    CHECK(std::abs(F.dbar(x, y, 0)) < 1e-9);
}

TEST_CASE("almost analytic extension: dbar decay order >= N - 0.5") {
    auto field = [](const VectorXd& x, int order) { return decay_field(x, order); };
    std::vector<VectorXd> probes;
    for (double x = 0; x <= 20; x += 0.5) probes.push_back(VectorXd::Constant(1, x));
    for (int N : {4, 6}) {
        jets::AlmostAnalyticExtension F(field, 1, N, 0.5, probes);
        VectorXd x = VectorXd::Constant(1, 3.0), dir = VectorXd::Constant(1, 1.0);
        const double br = jbrack(x);
        const double slope = F.dbar_decay_slope(x, dir, 1e-3 * br, 1e-1 * br, 10);
        CHECK(slope >= N - 0.5);
    }
}
