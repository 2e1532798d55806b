#include "beamlab/jets.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <unordered_map>

namespace beamlab::jets {

namespace {

void enumerate(int dim, int order, std::vector<int>& cur, int pos, int left,
               std::vector<std::vector<int>>& out) {
    if (pos == dim) {
        out.push_back(cur);
        return;
    }
    for (int e = 0; e <= left; ++e) {
        cur[pos] = e;
        enumerate(dim, order, cur, pos + 1, left - e, out);
    }
    cur[pos] = 0;
}

uint64_t key_of(const std::vector<int>& e, int order) {
    uint64_t k = 0;
    for (int v : e) k = k * uint64_t(order + 2) + uint64_t(v);
    return k;
}

struct SpaceCacheEntry {
    JetSpace sp;
    std::unordered_map<uint64_t, int> lut;
};

std::map<std::pair<int, int>, std::unique_ptr<SpaceCacheEntry>>& cache() {
    static std::map<std::pair<int, int>, std::unique_ptr<SpaceCacheEntry>> c;
    return c;
}
std::mutex cache_mtx;

SpaceCacheEntry& entry_for(int dim, int order) {
    std::lock_guard<std::mutex> lk(cache_mtx);
    auto& c = cache();
    auto it = c.find({dim, order});
    if (it != c.end()) return *it->second;

    auto e = std::make_unique<SpaceCacheEntry>();
    JetSpace& sp = e->sp;
    sp.dim = dim;
    sp.order = order;
    // graded order: degree 0, 1, ..., order; lex within a degree
    std::vector<std::vector<int>> all;
    std::vector<int> cur(dim, 0);
    enumerate(dim, order, cur, 0, order, all);
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        int da = 0, db = 0;
        for (int v : a) da += v;
        for (int v : b) db += v;
        if (da != db) return da < db;
        return a < b;
    });
    sp.exps = std::move(all);
    const int sz = int(sp.exps.size());
    sp.deg.resize(sz);
    sp.fact.resize(sz);
    for (int i = 0; i < sz; ++i) {
        int d = 0;
        double f = 1.0;
        for (int v : sp.exps[i]) {
            d += v;
            for (int j = 2; j <= v; ++j) f *= j;
        }
        sp.deg[i] = d;
        sp.fact[i] = f;
    }
    for (int i = 0; i < sz; ++i) e->lut[key_of(sp.exps[i], order)] = i;
    sp.prod.assign(size_t(sz) * sz, -1);
    std::vector<int> sum(dim);
    for (int i = 0; i < sz; ++i)
        for (int j = 0; j < sz; ++j) {
            if (sp.deg[i] + sp.deg[j] > order) continue;
            for (int d = 0; d < dim; ++d) sum[d] = sp.exps[i][d] + sp.exps[j][d];
            sp.prod[size_t(i) * sz + j] = int32_t(e->lut.at(key_of(sum, order)));
        }
    auto [pos, ok] = c.emplace(std::make_pair(dim, order), std::move(e));
    (void)ok;
    return *pos->second;
}

}  // namespace

int JetSpace::index_of(const std::vector<int>& e) const {
    int d = 0;
    for (int v : e) {
        if (v < 0) return -1;
        d += v;
    }
    if (d > order) return -1;
    // entry_for caches by (dim, order); the lut lives beside it
    const auto& ent = entry_for(dim, order);
    auto it = ent.lut.find(key_of(e, order));
    return it == ent.lut.end() ? -1 : it->second;
}

const JetSpace& JetSpace::get(int dim, int order) { return entry_for(dim, order).sp; }

Jet Jet::coordinate(const JetSpace& sp, int var, cplx value0) {
    Jet j(sp);
    j.c_[0] = value0;
    if (sp.order >= 1) {
        std::vector<int> e(sp.dim, 0);
        e[var] = 1;
        j.c_[sp.index_of(e)] = 1.0;
    }
    return j;
}

cplx Jet::coeff(const std::vector<int>& e) const {
    int i = sp_->index_of(e);
    return i < 0 ? cplx(0) : c_[i];
}

void Jet::set_coeff(const std::vector<int>& e, cplx v) {
    int i = sp_->index_of(e);
    if (i < 0) throw std::invalid_argument("Jet::set_coeff: index outside space");
    c_[i] = v;
}

Jet& Jet::operator+=(const Jet& o) {
    if (sp_ != o.sp_) throw std::invalid_argument("Jet: space mismatch");
    c_ += o.c_;
    return *this;
}

Jet& Jet::operator-=(const Jet& o) {
    if (sp_ != o.sp_) throw std::invalid_argument("Jet: space mismatch");
    c_ -= o.c_;
    return *this;
}

Jet Jet::derivative(int var) const {
    Jet out(*sp_);
    const int sz = sp_->size();
    std::vector<int> e;
    for (int i = 0; i < sz; ++i) {
        const int ev = sp_->exps[i][var];
        if (ev == 0) continue;
        e = sp_->exps[i];
        e[var] -= 1;
        out.c_[sp_->index_of(e)] += double(ev) * c_[i];
    }
    return out;
}

cplx Jet::eval(const VectorXcd& u) const {
    if (u.size() != sp_->dim) throw std::invalid_argument("Jet::eval: dim mismatch");
    // powers per variable up to order
    const int N = sp_->order;
    std::vector<std::vector<cplx>> pw(sp_->dim, std::vector<cplx>(N + 1, 1.0));
    for (int d = 0; d < sp_->dim; ++d)
        for (int p = 1; p <= N; ++p) pw[d][p] = pw[d][p - 1] * u[d];
    cplx s = 0.0;
    for (int i = 0; i < sp_->size(); ++i) {
        cplx m = c_[i];
        if (m == cplx(0)) continue;
        for (int d = 0; d < sp_->dim; ++d) m *= pw[d][sp_->exps[i][d]];
        s += m;
    }
    return s;
}

Jet Jet::truncated(int new_order) const {
    const JetSpace& sp2 = JetSpace::get(sp_->dim, new_order);
    Jet out(sp2);
    for (int i = 0; i < sp2.size(); ++i) {
        int j = sp_->index_of(sp2.exps[i]);
        if (j >= 0) out.c_[i] = c_[j];
    }
    return out;
}

Jet Jet::extended(int new_order) const {
    if (new_order < sp_->order) return truncated(new_order);
    const JetSpace& sp2 = JetSpace::get(sp_->dim, new_order);
    Jet out(sp2);
    for (int i = 0; i < sp_->size(); ++i) out.c_[sp2.index_of(sp_->exps[i])] = c_[i];
    return out;
}

Jet jet_multiply(const Jet& a, const Jet& b) {
    if (&a.space() != &b.space()) throw std::invalid_argument("jet_multiply: space mismatch");
    const JetSpace& sp = a.space();
    const int sz = sp.size();
    Jet out(sp);
    const VectorXcd& ca = a.coeffs();
    const VectorXcd& cb = b.coeffs();
    VectorXcd& co = out.coeffs();
    for (int i = 0; i < sz; ++i) {
        const cplx ai = ca[i];
        if (ai == cplx(0)) continue;
        const int32_t* row = &sp.prod[size_t(i) * sz];
        for (int j = 0; j < sz; ++j) {
            const int32_t k = row[j];
            if (k < 0) continue;
            if (cb[j] == cplx(0)) continue;
            co[k] += ai * cb[j];
        }
    }
    return out;
}

namespace {

// recursive product over variables with early termination on degree
void compose_rec(const Jet& outer, const std::vector<Jet>& dif, int var, int deg_left,
                 std::vector<int>& gamma, const Jet& partial, Jet& acc) {
    const JetSpace& osp = outer.space();
    if (var == osp.dim) {
        const int i = osp.index_of(gamma);
        const cplx c = outer.coeffs()[i];
        if (c != cplx(0)) {
            Jet t = partial;
            t *= c;
            acc += t;
        }
        return;
    }
    // exponent 0 for this variable
    gamma[var] = 0;
    compose_rec(outer, dif, var + 1, deg_left, gamma, partial, acc);
    Jet p = partial;
    for (int e = 1; e <= deg_left; ++e) {
        p = jet_multiply(p, dif[var]);
        gamma[var] = e;
        compose_rec(outer, dif, var + 1, deg_left - e, gamma, p, acc);
    }
    gamma[var] = 0;
}

}  // namespace

Jet jet_compose(const Jet& outer, const std::vector<Jet>& inner, const VectorXcd& outer_base) {
    if (int(inner.size()) != outer.dim())
        throw std::invalid_argument("jet_compose: outer dim != number of inner jets");
    if (outer_base.size() != outer.dim())
        throw std::invalid_argument("jet_compose: base size mismatch");
    const JetSpace& isp = inner[0].space();
    std::vector<Jet> dif;
    dif.reserve(inner.size());
    for (size_t j = 0; j < inner.size(); ++j) {
        if (&inner[j].space() != &isp) throw std::invalid_argument("jet_compose: inner space mismatch");
        if (std::abs(inner[j].value() - outer_base[long(j)]) > 1e-6)
            throw std::invalid_argument("jet_compose: inner value does not match outer base");
        Jet d = inner[j];
        d.coeffs()[0] -= outer_base[long(j)];
        dif.push_back(std::move(d));
    }
    Jet acc(isp);
    std::vector<int> gamma(outer.dim(), 0);
    Jet one = Jet::constant(isp, 1.0);
    compose_rec(outer, dif, 0, outer.order(), gamma, one, acc);
    return acc;
}

std::vector<Jet> jet_invert_map(const std::vector<Jet>& Z) {
    const JetSpace& sp = Z[0].space();
    const int m = sp.dim;
    if (int(Z.size()) != m) throw std::invalid_argument("jet_invert_map: need dim jets");
    MatrixXcd L(m, m);
    std::vector<int> e(m, 0);
    for (int i = 0; i < m; ++i) {
        if (std::abs(Z[i].value()) > 1e-7)
            throw std::invalid_argument("jet_invert_map: map must fix the origin");
        for (int j = 0; j < m; ++j) {
            e.assign(m, 0);
            e[j] = 1;
            L(i, j) = Z[i].coeff(e);
        }
    }
    MatrixXcd Linv = L.inverse();
    // W = Linv * id as the starting guess, then iterate W <- W - Linv*(W∘Z - id)
    std::vector<Jet> id(m, Jet(sp)), W(m, Jet(sp));
    for (int i = 0; i < m; ++i) id[i] = Jet::coordinate(sp, i, 0.0);
    for (int i = 0; i < m; ++i) {
        Jet w(sp);
        for (int j = 0; j < m; ++j) w += Linv(i, j) * id[j];
        W[i] = w;
    }
    VectorXcd zero_base = VectorXcd::Zero(m);
    for (int it = 0; it < sp.order; ++it) {
        std::vector<Jet> WZ(m, Jet(sp));
        for (int i = 0; i < m; ++i) WZ[i] = jet_compose(W[i], Z, zero_base);
        double resid = 0.0;
        std::vector<Jet> corr(m, Jet(sp));
        for (int i = 0; i < m; ++i) {
            Jet r = WZ[i] - id[i];
            resid += r.coeffs().norm();
            corr[i] = r;
        }
        if (resid < 1e-14) break;
        for (int i = 0; i < m; ++i) {
            Jet upd(sp);
            for (int j = 0; j < m; ++j) upd += Linv(i, j) * corr[j];
            W[i] -= upd;
        }
    }
    return W;
}

Jet jet_exp(const Jet& f) {
    const JetSpace& sp = f.space();
    Jet nil = f;
    const cplx f0 = nil.value();
    nil.coeffs()[0] = 0.0;
    Jet out = Jet::constant(sp, 1.0);
    Jet term = Jet::constant(sp, 1.0);
    for (int k = 1; k <= sp.order; ++k) {
        term = jet_multiply(term, nil);
        term *= cplx(1.0 / double(k));
        out += term;
    }
    out *= std::exp(f0);
    return out;
}

Jet power_jet(double a, double u0, int order) {
    if (u0 <= 0.0) throw std::invalid_argument("power_jet: base must be positive");
    const JetSpace& sp = JetSpace::get(1, order);
    Jet j(sp);
    double coef = std::pow(u0, a);
    std::vector<int> e(1, 0);
    for (int k = 0; k <= order; ++k) {
        e[0] = k;
        j.set_coeff(e, coef);
        coef *= (a - k) / double(k + 1) / u0;
    }
    return j;
}

// ---------------------------------------------------------------------------

AlmostAnalyticExtension::AlmostAnalyticExtension(FieldJet field, int dim, int order, double sigma3,
                                                 const std::vector<VectorXd>& probe_points)
    : field_(std::move(field)), dim_(dim), order_(order) {
    if (probe_points.empty())
        throw std::invalid_argument("almost_analytic_extend: seminorms unavailable (no probe points)");
    M_.assign(order_ + 1, 0.0);
    for (const auto& x : probe_points) {
        Jet j = field_(x, order_);
        const JetSpace& sp = j.space();
        const double w = jbrack(x);
        std::vector<double> per_deg(order_ + 1, 0.0);
        for (int i = 0; i < sp.size(); ++i)
            per_deg[sp.deg[i]] += std::abs(j.coeffs()[i]) * sp.fact[i];
        for (int k = 0; k <= order_; ++k)
            M_[k] = std::max(M_[k], per_deg[k] * std::pow(w, k + sigma3));
    }
    // L_k from the convergence bound L_k^k >= D0 M_k, safety factor 2, increasing.
    L_.assign(order_, 1.0);
    double prev = 1.0;
    for (int k = 1; k <= order_; ++k) {
        double v = std::max(1.0, 2.0 * std::pow(std::max(M_[k], 1e-300), 1.0 / k));
        v = std::max(v, prev + 1e-9);
        L_[k - 1] = v;
        prev = v;
    }
}

AlmostAnalyticExtension::AlmostAnalyticExtension(FieldJet field, int dim, int order,
                                                 std::vector<double> scales)
    : field_(std::move(field)), dim_(dim), order_(order), L_(std::move(scales)) {
    if (int(L_.size()) != order_) throw std::invalid_argument("scales: need one per order 1..N");
    double prev = 0.0;
    for (double l : L_) {
        if (l < 1.0 || l < prev) throw std::invalid_argument("scales must be >= 1 and increasing");
        prev = l;
    }
}

cplx AlmostAnalyticExtension::eval(const VectorXd& x, const VectorXd& y) const {
    Jet j = field_(x, order_);
    const JetSpace& sp = j.space();
    const double inv = 1.0 / jbrack(x);
    const double ry = y.norm();
    cplx out = j.value();
    VectorXcd iy = (cplx(0.0, 1.0) * y.cast<cplx>());
    // powers of iy per variable
    std::vector<std::vector<cplx>> pw(dim_, std::vector<cplx>(order_ + 1, 1.0));
    for (int d = 0; d < dim_; ++d)
        for (int p = 1; p <= order_; ++p) pw[d][p] = pw[d][p - 1] * iy[d];
    for (int i = 1; i < sp.size(); ++i) {
        const int k = sp.deg[i];
        const double chi = smooth_down(L_[k - 1] * ry * inv, 0.5, 1.0);
        if (chi == 0.0) continue;
        cplx m = j.coeffs()[i] * chi;
        for (int d = 0; d < dim_; ++d) m *= pw[d][sp.exps[i][d]];
        out += m;
    }
    return out;
}

cplx AlmostAnalyticExtension::dbar(const VectorXd& x, const VectorXd& y, int jvar, double h) const {
    VectorXd xp = x, xm = x, yp = y, ym = y;
    xp[jvar] += h;
    xm[jvar] -= h;
    yp[jvar] += h;
    ym[jvar] -= h;
    const cplx dx = (eval(xp, y) - eval(xm, y)) / (2.0 * h);
    const cplx dy = (eval(x, yp) - eval(x, ym)) / (2.0 * h);
    return 0.5 * (dx + cplx(0.0, 1.0) * dy);
}

double AlmostAnalyticExtension::dbar_decay_slope(const VectorXd& x, const VectorXd& dir,
                                                 double t_lo, double t_hi, int samples) const {
    std::vector<double> lx, ly;
    for (int s = 0; s < samples; ++s) {
        const double t = t_lo * std::pow(t_hi / t_lo, double(s) / (samples - 1));
        VectorXd y = t * dir;
        double m = 0.0;
        for (int j = 0; j < dim_; ++j) m = std::max(m, std::abs(dbar(x, y, j, std::min(1e-5, t / 50))));
        if (m <= 0) m = 1e-300;
        lx.push_back(std::log(t));
        ly.push_back(std::log(m));
    }
    return fit_slope(lx, ly);
}

}  // namespace beamlab::jets
