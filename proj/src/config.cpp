#include "beamlab/config.hpp"

#include <fstream>
#include <set>

namespace beamlab::config {

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
}

template <class T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    check_keys(j, {"perturbation", "geometry", "jets", "experiment", "tolerances", "seed"}, "root");
    if (j.contains("perturbation")) {
        const json& p = j.at("perturbation");
        check_keys(p, {"family", "n", "epsilon", "sigma0", "amplitude"}, "perturbation");
        get(p, "family", c.family);
        get(p, "n", c.n);
        get(p, "epsilon", c.epsilon);
        get(p, "sigma0", c.sigma0);
        get(p, "amplitude", c.amplitude);
    }
    if (j.contains("geometry")) {
        const json& g = j.at("geometry");
        check_keys(g, {"delta", "delta_domain", "c0", "c1", "delta1", "delta2", "xi0"}, "geometry");
        get(g, "delta", c.delta);
        get(g, "delta_domain", c.delta_domain);
        get(g, "c0", c.c0);
        get(g, "c1", c.c1);
        get(g, "delta1", c.delta1);
        get(g, "delta2", c.delta2);
        get(g, "xi0", c.xi0);
    }
    if (j.contains("jets")) {
        const json& g = j.at("jets");
        check_keys(g, {"n_jet", "n0", "n_amp"}, "jets");
        get(g, "n_jet", c.n_jet);
        get(g, "n0", c.n0);
        get(g, "n_amp", c.n_amp);
    }
    if (j.contains("experiment")) {
        const json& e = j.at("experiment");
        check_keys(e, {"lambdas", "lambda_t", "T", "y_values", "s_points", "q", "r"}, "experiment");
        get(e, "lambdas", c.lambdas);
        get(e, "lambda_t", c.lambda_t);
        get(e, "T", c.T);
        get(e, "y_values", c.y_values);
        get(e, "s_points", c.s_points);
        get(e, "q", c.q);
        get(e, "r", c.r);
    }
    if (j.contains("tolerances")) {
        const json& t = j.at("tolerances");
        check_keys(t, {"flow", "beam", "evolve"}, "tolerances");
        get(t, "flow", c.flow_tol);
        get(t, "beam", c.beam_tol);
        get(t, "evolve", c.evolve_tol);
    }
    get(j, "seed", c.seed);
    c.validate();
    return c;
}

json ExperimentConfig::to_json() const {
    json j;
    j["perturbation"] = {{"family", family},   {"n", n},
                         {"epsilon", epsilon}, {"sigma0", sigma0},
                         {"amplitude", amplitude}};
    j["geometry"] = {{"delta", delta}, {"delta_domain", delta_domain}, {"c0", c0},
                     {"c1", c1},       {"delta1", delta1},             {"delta2", delta2},
                     {"xi0", xi0}};
    j["jets"] = {{"n_jet", n_jet}, {"n0", n0}, {"n_amp", n_amp}};
    j["experiment"] = {{"lambdas", lambdas},   {"lambda_t", lambda_t}, {"T", T},
                       {"y_values", y_values}, {"s_points", s_points}, {"q", q},
                       {"r", r}};
    j["tolerances"] = {{"flow", flow_tol}, {"beam", beam_tol}, {"evolve", evolve_tol}};
    j["seed"] = seed;
    return j;
}

void ExperimentConfig::validate() const {
    if (n != 1 && n != 2) throw std::invalid_argument("config: n must be 1 or 2");
    if (!(sigma0 > 0 && sigma0 < 1)) throw std::invalid_argument("config: sigma0 in (0,1)");
    if (epsilon < 0) throw std::invalid_argument("config: epsilon >= 0");
    if (delta2 > 0.01 + 1e-15) throw std::invalid_argument("config: delta2 <= 1/100");
    if (!(c0 > 0 && c0 <= 0.25)) throw std::invalid_argument("config: c0 in (0, 1/4]");
    if (4 * delta2 + 3 * delta1 > c0 + 1e-12)
        throw std::invalid_argument("config: need 4δ2 + 3δ1 <= c0 (cutoff geometry)");
    if (int(xi0.size()) != n) throw std::invalid_argument("config: xi0 has wrong dimension");
    double nrm = 0;
    for (double v : xi0) nrm += v * v;
    if (std::abs(std::sqrt(nrm) - 1.0) > 1e-9) throw std::invalid_argument("config: |xi0| = 1");
    if (n_jet < 2 || n0 < 1 || n_amp < 0) throw std::invalid_argument("config: jet orders");
    // Strichartz admissibility 2/q = n/2 - n/r
    if (std::abs(2.0 / q - (0.5 * n - double(n) / r)) > 1e-12 || !(q > 2))
        throw std::invalid_argument("config: inadmissible Strichartz pair");
    for (double lt : lambda_t)
        if (lt == 0.0) throw std::invalid_argument("config: lambda_t must be nonzero");
    if (!(T > 0)) throw std::invalid_argument("config: T > 0");
    if (!(flow_tol >= 1e-12 && flow_tol <= 1e-6))
        throw std::invalid_argument("config: flow tol in [1e-12, 1e-6]");
}

std::string ExperimentConfig::canonical() const { return to_json().dump(); }

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json j = json::parse(in);
    return ExperimentConfig::from_json(j);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace beamlab::config
