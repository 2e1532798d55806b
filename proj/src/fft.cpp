#include "beamlab/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

namespace beamlab::fft {

namespace {

std::mutex plan_mtx;

fftw_plan plan_for(int n0, int n1, int sign) {
    static std::map<std::tuple<int, int, int>, fftw_plan> plans;
    std::lock_guard<std::mutex> lk(plan_mtx);
    auto key = std::make_tuple(n0, n1, sign);
    auto it = plans.find(key);
    if (it != plans.end()) return it->second;
    std::vector<cplx> buf(size_t(n0) * size_t(n1));
    fftw_complex* p = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_plan plan = n1 == 1 ? fftw_plan_dft_1d(n0, p, p, sign, FFTW_ESTIMATE)
                             : fftw_plan_dft_2d(n0, n1, p, p, sign, FFTW_ESTIMATE);
    plans[key] = plan;
    return plan;
}

}  // namespace

void forward(VectorXcd& data, int n0, int n1) {
    if (data.size() != long(n0) * n1) throw std::invalid_argument("fft: size mismatch");
    fftw_complex* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan_for(n0, n1, FFTW_FORWARD), p, p);
}

void inverse(VectorXcd& data, int n0, int n1) {
    if (data.size() != long(n0) * n1) throw std::invalid_argument("fft: size mismatch");
    fftw_complex* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan_for(n0, n1, FFTW_BACKWARD), p, p);
    data *= 1.0 / double(data.size());
}

}  // namespace beamlab::fft
