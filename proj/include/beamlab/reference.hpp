#pragma once

#include "beamlab/fbi.hpp"
#include "beamlab/ode.hpp"
#include "beamlab/symbols.hpp"

namespace beamlab::reference {

using fbi::AlphaGrid;
using fbi::CutoffFamily;
using fbi::SpatialField;
using fbi::SpatialGrid;
using symbols::MetricPerturbation;

struct StrichartzPair {
    double q = 8, r = 4;
    int n = 1;
    StrichartzPair(double q_, double r_, int n_) : q(q_), r(r_), n(n_) {
        if (!(q > 2.0) || !(r < 1e12))
            throw std::invalid_argument("StrichartzPair: need q > 2, r < inf");
        if (std::abs(2.0 / q - (0.5 * n - double(n) / r)) > 1e-12)
            throw std::invalid_argument("StrichartzPair: 2/q = n/2 - n/r fails");
    }
};

/// Spectral application of P = -Σ_{jk} ∂_j(g^{jk} ∂_k ·) on the periodized grid.
SpatialField apply_P(const MetricPerturbation& pert, const SpatialField& u);

/// Discrete energy ⟨Pu, u⟩.
double energy(const MetricPerturbation& pert, const SpatialField& u);

struct EvolveOptions {
    double tol = 1e-10;
    double wrap_abort = 1e-8;  // wraparound mass fraction triggering an abort
};

struct EvolveStats {
    long steps = 0;
    double mass_drift = 0;    // max | ||u(t)|| - ||u0|| |
    double energy_drift = 0;  // max |E(t) - E(0)|
    double wrap_mass = 0;
};

/// e^{-itP} u0 by an adaptive exponential (Lawson) integrator on the spectral
/// system: the free part is applied exactly, the ε-coupling is stepped by an
/// embedded RK pair. Checkpoints are reported through `cb` if given.
SpatialField evolve_reference(const MetricPerturbation& pert, const SpatialField& u0, double t,
                              const EvolveOptions& opt = {}, EvolveStats* stats = nullptr,
                              const std::vector<double>& checkpoints = {},
                              const std::function<void(double, const SpatialField&)>& cb = {});

/// K_±(t)u = χ1± ψ2(D/λ) e^{-itP} ψ2(D/λ) χ1± u.
SpatialField sandwiched_propagator(const MetricPerturbation& pert, const CutoffFamily& cut,
                                   int sign, const SpatialField& u0, double t, double lambda,
                                   const EvolveOptions& opt = {});

/// Mixed-norm ‖e^{-itP}u0‖_{L^q([-T,T], L^r)} by Simpson in t.
double strichartz_norm(const MetricPerturbation& pert, const SpatialField& u0,
                       const StrichartzPair& pair, double T, int t_nodes = 64,
                       const EvolveOptions& opt = {});

/// Periodized grid sized for frequency λ·(b+2δ2) over |t| <= T: the box holds
/// 4x the classical excursion plus the data width, the spacing resolves both
/// the top frequency and the 1/√λ FBI scale.
SpatialGrid reference_grid(int n, double lambda, double T, double data_halfwidth = 4.0,
                           double b_edge = 1.95);

/// L²-normalized coherent wave packet at frequency λ·s0·dir with width 1/√λ.
SpatialField wave_packet(const SpatialGrid& g, double lambda, const VectorXd& x0,
                         const VectorXd& s0);

}  // namespace beamlab::reference
