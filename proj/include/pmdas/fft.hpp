#pragma once

#include <span>

#include "pmdas/common.hpp"

namespace pmdas {

/// Complex FFT of a fixed size backed by FFTW. Plans are created once;
/// execution is safe from several threads on distinct buffers.
/// Neither direction normalizes.
class Fft {
public:
    explicit Fft(std::size_t n);
    ~Fft();
    Fft(const Fft&) = delete;
    Fft& operator=(const Fft&) = delete;
    Fft(Fft&& other) noexcept;
    Fft& operator=(Fft&& other) noexcept;

    std::size_t size() const { return n_; }

    void forward(std::span<const cd> in, std::span<cd> out) const;
    void inverse(std::span<const cd> in, std::span<cd> out) const;

private:
    void execute(void* plan, std::span<const cd> in, std::span<cd> out) const;

    std::size_t n_ = 0;
    void* forward_plan_ = nullptr;
    void* inverse_plan_ = nullptr;
};

}  // namespace pmdas
