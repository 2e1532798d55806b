#pragma once

#include <string>

#include "beamlab/common.hpp"

// vendor single-header json
#include "json.hpp"

namespace beamlab::config {

using json = nlohmann::json;

/// All experiment constants in one strict document: unknown keys are errors so
/// silent default drift cannot invalidate tolerance claims.
struct ExperimentConfig {
    // perturbation
    std::string family = "isotropic-bump";
    int n = 1;
    double epsilon = 0.05;
    double sigma0 = 0.5;
    double amplitude = 1.0;

    // geometry constants
    double delta = 1.0;         // kernel window scale (χ5 / quadrature support)
    double delta_domain = 0.01; // Ω_δ scale for phase-bound checks
    double c0 = 0.1;
    double c1 = 0.01;
    double delta1 = 0.015;
    double delta2 = 0.01;
    std::vector<double> xi0 = {1.0};

    // jet orders
    int n_jet = 4;
    int n0 = 4;
    int n_amp = 2;

    // experiment scales
    std::vector<double> lambdas = {64, 128, 256, 512};
    std::vector<double> lambda_t = {0.5, 2.0, 16.0};
    double T = 1.0;
    std::vector<double> y_values = {0.3, 1.1};
    int s_points = 24;
    double q = 8.0, r = 4.0;

    // tolerances
    double flow_tol = 1e-10;
    double beam_tol = 1e-9;
    double evolve_tol = 1e-10;

    std::uint64_t seed = 12345;

    static ExperimentConfig from_json(const json& j);
    json to_json() const;
    void validate() const;
    std::string canonical() const;  // deterministic dump used for the manifest hash
};

ExperimentConfig load_config(const std::string& path);
std::uint64_t fnv1a(const std::string& s);

}  // namespace beamlab::config
