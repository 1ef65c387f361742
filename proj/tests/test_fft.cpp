#include <doctest.h>

#include <cmath>
#include <random>

#include "pmdas/fft.hpp"

using namespace pmdas;

namespace {

std::vector<cd> naive_dft(const std::vector<cd>& x, int sign)
{
    const std::size_t n = x.size();
    std::vector<cd> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        cd acc{};
        for (std::size_t i = 0; i < n; ++i) {
            acc += x[i] * std::polar(1.0, sign * 2.0 * kPi * double((k * i) % n) / double(n));
        }
        out[k] = acc;
    }
    return out;
}

std::vector<cd> random_vector(std::size_t n, uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<cd> v(n);
    for (auto& c : v) c = {g(rng), g(rng)};
    return v;
}

}  // namespace

TEST_CASE("forward and inverse match the naive DFT")
{
    for (std::size_t n : {1u, 2u, 5u, 8u, 12u, 64u, 97u}) {
        Fft fft(n);
        CHECK(fft.size() == n);
        const auto x = random_vector(n, n);
        std::vector<cd> f(n), b(n);
        fft.forward(x, f);
        fft.inverse(x, b);
        const auto nf = naive_dft(x, -1), nb = naive_dft(x, +1);
        for (std::size_t k = 0; k < n; ++k) {
            CHECK(std::abs(f[k] - nf[k]) < 1e-10);
            CHECK(std::abs(b[k] - nb[k]) < 1e-10);
        }
    }
}

TEST_CASE("inverse of forward is n times the input")
{
    const std::size_t n = 4096;
    Fft fft(n);
    const auto x = random_vector(n, 7);
    std::vector<cd> f(n), back(n);
    fft.forward(x, f);
    fft.inverse(f, back);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(back[i] / double(n) - x[i]) < 1e-12);
}

TEST_CASE("size mismatches are rejected")
{
    Fft fft(8);
    std::vector<cd> a(8), b(7);
    CHECK_THROWS(fft.forward(a, b));
    CHECK_THROWS(fft.inverse(b, a));
    CHECK_THROWS(Fft(0));
}

TEST_CASE("moved-from plans stay usable through the new owner")
{
    Fft a(16);
    Fft b(std::move(a));
    std::vector<cd> x(16, cd{1, 0}), y(16);
    b.forward(x, y);
    CHECK(std::abs(y[0] - cd{16, 0}) < 1e-12);
    for (std::size_t k = 1; k < 16; ++k) CHECK(std::abs(y[k]) < 1e-12);
}
