#include "pmdas/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <utility>
#include <vector>

namespace pmdas {

namespace {

// FFTW's planner is not reentrant.
std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}

fftw_complex* as_fftw(cd* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

Fft::Fft(std::size_t n) : n_(n)
{
    if (n == 0) throw Error("Fft: size must be > 0");
    std::vector<cd> in(n), out(n);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    std::lock_guard lock(planner_mutex());
    forward_plan_ = fftw_plan_dft_1d(int(n), as_fftw(in.data()), as_fftw(out.data()), FFTW_FORWARD, flags);
    inverse_plan_ = fftw_plan_dft_1d(int(n), as_fftw(in.data()), as_fftw(out.data()), FFTW_BACKWARD, flags);
    if (!forward_plan_ || !inverse_plan_) throw Error("Fft: FFTW planning failed");
}

Fft::~Fft()
{
    if (!forward_plan_ && !inverse_plan_) return;
    std::lock_guard lock(planner_mutex());
    if (forward_plan_) fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
    if (inverse_plan_) fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

Fft::Fft(Fft&& other) noexcept
    : n_(other.n_),
      forward_plan_(std::exchange(other.forward_plan_, nullptr)),
      inverse_plan_(std::exchange(other.inverse_plan_, nullptr))
{
}

Fft& Fft::operator=(Fft&& other) noexcept
{
    if (this != &other) {
        Fft tmp(std::move(other));
        std::swap(n_, tmp.n_);
        std::swap(forward_plan_, tmp.forward_plan_);
        std::swap(inverse_plan_, tmp.inverse_plan_);
    }
    return *this;
}

void Fft::forward(std::span<const cd> in, std::span<cd> out) const { execute(forward_plan_, in, out); }

void Fft::inverse(std::span<const cd> in, std::span<cd> out) const { execute(inverse_plan_, in, out); }

void Fft::execute(void* plan, std::span<const cd> in, std::span<cd> out) const
{
    if (in.size() != n_ || out.size() != n_) throw Error("Fft: buffer size does not match plan size");
    // FFTW takes a non-const input pointer but does not write to it for out-of-place plans.
    fftw_execute_dft(static_cast<fftw_plan>(plan), as_fftw(const_cast<cd*>(in.data())), as_fftw(out.data()));
}

}  // namespace pmdas
