#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace pmdas {

using cd = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;  // m/s, vacuum

// Failure categories map onto CLI exit codes (see tools/pmdas_cli.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Probing-timing constraint violated (T_code <= 4 T_ir).
class TimingError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// 2x2 complex Jones matrix, row-major: [xx xy; yx yy].
/// Rows index the received polarization, columns the transmitted one.
struct Jones {
    cd xx{}, xy{}, yx{}, yy{};

    static constexpr Jones identity() { return {1.0, 0.0, 0.0, 1.0}; }

    constexpr cd det() const { return xx * yy - xy * yx; }
    constexpr Jones transpose() const { return {xx, yx, xy, yy}; }
    double frobenius2() const { return std::norm(xx) + std::norm(xy) + std::norm(yx) + std::norm(yy); }

    friend constexpr Jones operator*(const Jones& a, const Jones& b)
    {
        return {a.xx * b.xx + a.xy * b.yx, a.xx * b.xy + a.xy * b.yy,
                a.yx * b.xx + a.yy * b.yx, a.yx * b.xy + a.yy * b.yy};
    }
    friend constexpr Jones operator*(cd s, const Jones& m) { return {s * m.xx, s * m.xy, s * m.yx, s * m.yy}; }
    friend constexpr Jones operator+(const Jones& a, const Jones& b)
    {
        return {a.xx + b.xx, a.xy + b.xy, a.yx + b.yx, a.yy + b.yy};
    }
    friend constexpr Jones operator-(const Jones& a, const Jones& b)
    {
        return {a.xx - b.xx, a.xy - b.xy, a.yx - b.yx, a.yy - b.yy};
    }
    friend constexpr bool operator==(const Jones&, const Jones&) = default;
};

/// Light velocity in the fiber core, c/n.
inline double fiber_velocity(double refractive_index) { return kSpeedOfLight / refractive_index; }

}  // namespace pmdas
