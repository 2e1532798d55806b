#pragma once

#include "beamlab/common.hpp"

namespace beamlab::fft {

/// Cached-plan complex FFT over 1D/2D arrays (row-major for 2D).
/// forward: X_k = Σ_j x_j e^{-2πi jk/N}; inverse is normalized by 1/N.
void forward(VectorXcd& data, int n0, int n1 = 1);
void inverse(VectorXcd& data, int n0, int n1 = 1);

}  // namespace beamlab::fft
