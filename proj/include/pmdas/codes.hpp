#pragma once

// Mutually orthogonal complementary (Golay) code sets and the
// dual-polarization probe frames built from them.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmdas/common.hpp"

namespace pmdas::codes {

/// Largest sequence length generate_golay_pair will build (4 * 2^20).
inline constexpr std::size_t kMaxSequenceLength = std::size_t{4} << 20;
inline constexpr double kDefaultRefractiveIndex = 1.45;

/// Sequence of +1/-1 symbols. Construction rejects any other value.
class BipolarSequence {
public:
    BipolarSequence() = default;
    explicit BipolarSequence(std::vector<int8_t> symbols);

    std::size_t size() const { return symbols_.size(); }
    int8_t operator[](std::size_t i) const { return symbols_[i]; }
    std::span<const int8_t> symbols() const { return symbols_; }

    BipolarSequence reversed() const;
    BipolarSequence negated() const;
    /// this ‖ other
    BipolarSequence concat(const BipolarSequence& other) const;

    friend bool operator==(const BipolarSequence&, const BipolarSequence&) = default;

private:
    std::vector<int8_t> symbols_;
};

struct GolayPair {
    BipolarSequence a;
    BipolarSequence b;

    std::size_t size() const { return a.size(); }
};

struct OrthogonalCodeSet {
    GolayPair pair_x;
    GolayPair pair_y;
    int K = 0;

    std::size_t size() const { return pair_x.size(); }
};

/// R(k) = sum_i x[i+k] * y[i] over valid i, for k = -(N-1)..(N-1).
/// Element k + N - 1 of the result holds lag k. Integer exact.
std::vector<int64_t> aperiodic_cross_correlation(const BipolarSequence& x, const BipolarSequence& y);

/// Golay pair of length 4 * 2^K from the doubling recursion
/// a' = a ‖ b, b' = a ‖ -b seeded with ([1,1,1,-1], [1,1,-1,1]).
GolayPair generate_golay_pair(int K, std::size_t max_length = kMaxSequenceLength);

/// Golay mate (reverse(b), -reverse(a)). {p, mate_pair(p)} is mutually orthogonal.
GolayPair mate_pair(const GolayPair& p);

/// generate_golay_pair(K) for X and its mate for Y.
OrthogonalCodeSet make_code_set(int K);

struct Violation {
    enum class Which { ComplementaryX, ComplementaryY, MutualOrthogonality };
    Which which;
    int64_t lag;
    int64_t value;
};

std::string to_string(Violation::Which w);

struct VerificationReport {
    bool complementary_x = false;
    bool complementary_y = false;
    bool mutually_orthogonal = false;
    std::optional<Violation> first_violation;

    bool ok() const { return complementary_x && complementary_y && mutually_orthogonal; }
};

/// Exhaustive integer check of complementarity of both pairs and of the
/// cross-correlation sum R(x.a, y.a) + R(x.b, y.b) at every lag.
VerificationReport verify_code_set(const OrthogonalCodeSet& s);

struct ProbeFrame {
    std::vector<double> x_stream;  // pair_x.a ‖ pair_x.b, BPSK field values
    std::vector<double> y_stream;  // pair_y.a ‖ pair_y.b
    double f_symb = 0;             // baud
    double t_code = 0;             // s, 2N / f_symb
    double bw = 0;                 // Hz, 1 / (2 t_code)
    double s_r = 0;                // m, c_f / (2 f_symb)
    double refractive_index = kDefaultRefractiveIndex;
    int K = 0;

    std::size_t length() const { return x_stream.size(); }
    std::size_t code_length() const { return x_stream.size() / 2; }
};

/// Throws ConfigError if the set fails verification or f_symb <= 0.
ProbeFrame build_probe_frame(const OrthogonalCodeSet& s, double f_symb,
                             double refractive_index = kDefaultRefractiveIndex);

struct TimingReport {
    double t_ir = 0;   // 2L / c_f
    double t_coh = 0;  // 1 / (pi * linewidth), Lorentzian line
    bool lower_bound_ok = false;  // t_code > 4 t_ir
    bool coherence_ok = false;    // t_code < t_coh
};

TimingReport validate_timing(double length_m, const ProbeFrame& frame, double linewidth_hz);

double coherence_time(double linewidth_hz);

}  // namespace pmdas::codes
