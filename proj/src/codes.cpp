#include "pmdas/codes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pmdas::codes {

BipolarSequence::BipolarSequence(std::vector<int8_t> symbols) : symbols_(std::move(symbols))
{
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        if (symbols_[i] != 1 && symbols_[i] != -1) {
            throw ConfigError("bipolar sequence: symbol " + std::to_string(i) + " is " +
                              std::to_string(int(symbols_[i])) + ", expected +1 or -1");
        }
    }
}

BipolarSequence BipolarSequence::reversed() const
{
    return BipolarSequence(std::vector<int8_t>(symbols_.rbegin(), symbols_.rend()));
}

BipolarSequence BipolarSequence::negated() const
{
    std::vector<int8_t> out(symbols_.size());
    std::transform(symbols_.begin(), symbols_.end(), out.begin(), [](int8_t s) { return int8_t(-s); });
    return BipolarSequence(std::move(out));
}

BipolarSequence BipolarSequence::concat(const BipolarSequence& other) const
{
    std::vector<int8_t> out;
    out.reserve(size() + other.size());
    out.insert(out.end(), symbols_.begin(), symbols_.end());
    out.insert(out.end(), other.symbols_.begin(), other.symbols_.end());
    return BipolarSequence(std::move(out));
}

namespace {

// sum_i x[i+k] y[i] for one lag; k may be negative.
int32_t lag_product(const int8_t* x, const int8_t* y, std::size_t n, std::ptrdiff_t k)
{
    int32_t acc = 0;
    if (k >= 0) {
        const std::size_t m = n - std::size_t(k);
        const int8_t* xs = x + k;
        for (std::size_t i = 0; i < m; ++i) acc += int32_t(xs[i]) * int32_t(y[i]);
    } else {
        const std::size_t m = n - std::size_t(-k);
        const int8_t* ys = y - k;
        for (std::size_t i = 0; i < m; ++i) acc += int32_t(x[i]) * int32_t(ys[i]);
    }
    return acc;
}

void require_equal_length(const BipolarSequence& x, const BipolarSequence& y)
{
    if (x.size() != y.size()) {
        throw ConfigError("correlation: length mismatch (" + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()) + ")");
    }
    if (x.size() == 0) throw ConfigError("correlation: empty sequences");
}

// First nonzero lag of R(a,a)+R(b,b) beyond lag 0, or nullopt if complementary.
std::optional<Violation> check_complementary(const GolayPair& p, Violation::Which which)
{
    const std::size_t n = p.size();
    const int8_t* a = p.a.symbols().data();
    const int8_t* b = p.b.symbols().data();
    const int32_t zero = lag_product(a, a, n, 0) + lag_product(b, b, n, 0);
    if (zero != int32_t(2 * n)) return Violation{which, 0, zero};
    // Autocorrelation sums are even in the lag; nonnegative lags suffice.
    for (std::size_t k = 1; k < n; ++k) {
        const auto lag = std::ptrdiff_t(k);
        const int32_t v = lag_product(a, a, n, lag) + lag_product(b, b, n, lag);
        if (v != 0) return Violation{which, int64_t(k), v};
    }
    return std::nullopt;
}

}  // namespace

std::vector<int64_t> aperiodic_cross_correlation(const BipolarSequence& x, const BipolarSequence& y)
{
    require_equal_length(x, y);
    const std::size_t n = x.size();
    std::vector<int64_t> r(2 * n - 1);
    for (std::ptrdiff_t k = -std::ptrdiff_t(n) + 1; k < std::ptrdiff_t(n); ++k) {
        r[std::size_t(k + std::ptrdiff_t(n) - 1)] = lag_product(x.symbols().data(), y.symbols().data(), n, k);
    }
    return r;
}

GolayPair generate_golay_pair(int K, std::size_t max_length)
{
    if (K < 0) throw ConfigError("generate_golay_pair: K must be >= 0, got " + std::to_string(K));
    if (K > 40 || (std::size_t{4} << K) > max_length) {
        throw ConfigError("generate_golay_pair: length 4*2^" + std::to_string(K) +
                          " exceeds the maximum frame length " + std::to_string(max_length));
    }
    GolayPair p{BipolarSequence({1, 1, 1, -1}), BipolarSequence({1, 1, -1, 1})};
    for (int r = 0; r < K; ++r) {
        GolayPair next{p.a.concat(p.b), p.a.concat(p.b.negated())};
        p = std::move(next);
    }
    return p;
}

GolayPair mate_pair(const GolayPair& p)
{
    return {p.b.reversed(), p.a.reversed().negated()};
}

OrthogonalCodeSet make_code_set(int K)
{
    GolayPair x = generate_golay_pair(K);
    GolayPair y = mate_pair(x);
    return {std::move(x), std::move(y), K};
}

std::string to_string(Violation::Which w)
{
    switch (w) {
    case Violation::Which::ComplementaryX: return "complementary_x";
    case Violation::Which::ComplementaryY: return "complementary_y";
    case Violation::Which::MutualOrthogonality: return "mutually_orthogonal";
    }
    return "unknown";
}

VerificationReport verify_code_set(const OrthogonalCodeSet& s)
{
    const std::size_t n = s.pair_x.a.size();
    if (n == 0 || s.pair_x.b.size() != n || s.pair_y.a.size() != n || s.pair_y.b.size() != n) {
        throw ConfigError("verify_code_set: all four sequences must have the same nonzero length");
    }

    VerificationReport rep;
    auto vx = check_complementary(s.pair_x, Violation::Which::ComplementaryX);
    auto vy = check_complementary(s.pair_y, Violation::Which::ComplementaryY);
    rep.complementary_x = !vx;
    rep.complementary_y = !vy;

    std::optional<Violation> vo;
    const int8_t* xa = s.pair_x.a.symbols().data();
    const int8_t* xb = s.pair_x.b.symbols().data();
    const int8_t* ya = s.pair_y.a.symbols().data();
    const int8_t* yb = s.pair_y.b.symbols().data();
    for (std::ptrdiff_t k = -std::ptrdiff_t(n) + 1; k < std::ptrdiff_t(n) && !vo; ++k) {
        const int32_t v = lag_product(xa, ya, n, k) + lag_product(xb, yb, n, k);
        if (v != 0) vo = Violation{Violation::Which::MutualOrthogonality, k, v};
    }
    rep.mutually_orthogonal = !vo;

    if (vx) rep.first_violation = vx;
    else if (vy) rep.first_violation = vy;
    else rep.first_violation = vo;
    return rep;
}

ProbeFrame build_probe_frame(const OrthogonalCodeSet& s, double f_symb, double refractive_index)
{
    if (!(f_symb > 0) || !std::isfinite(f_symb)) {
        throw ConfigError("build_probe_frame: symbol rate must be > 0");
    }
    if (!(refractive_index > 1.0 && refractive_index < 2.0)) {
        throw ConfigError("build_probe_frame: refractive index must lie in (1, 2)");
    }
    const auto rep = verify_code_set(s);
    if (!rep.ok()) {
        const auto& v = *rep.first_violation;
        throw ConfigError("build_probe_frame: code set fails " + to_string(v.which) + " at lag " +
                          std::to_string(v.lag) + " (value " + std::to_string(v.value) + ")");
    }

    ProbeFrame f;
    auto append = [](std::vector<double>& out, const BipolarSequence& seq) {
        for (int8_t v : seq.symbols()) out.push_back(double(v));
    };
    const std::size_t n = s.size();
    f.x_stream.reserve(2 * n);
    f.y_stream.reserve(2 * n);
    append(f.x_stream, s.pair_x.a);
    append(f.x_stream, s.pair_x.b);
    append(f.y_stream, s.pair_y.a);
    append(f.y_stream, s.pair_y.b);

    f.f_symb = f_symb;
    f.t_code = double(2 * n) / f_symb;
    f.bw = 1.0 / (2.0 * f.t_code);
    f.refractive_index = refractive_index;
    f.s_r = fiber_velocity(refractive_index) / (2.0 * f_symb);
    f.K = s.K;
    return f;
}

double coherence_time(double linewidth_hz)
{
    if (linewidth_hz < 0) throw ConfigError("coherence_time: linewidth must be >= 0");
    if (linewidth_hz == 0) return std::numeric_limits<double>::infinity();
    return 1.0 / (kPi * linewidth_hz);
}

TimingReport validate_timing(double length_m, const ProbeFrame& frame, double linewidth_hz)
{
    if (!(length_m > 0)) throw ConfigError("validate_timing: fiber length must be > 0");
    TimingReport r;
    r.t_ir = 2.0 * length_m / fiber_velocity(frame.refractive_index);
    r.t_coh = coherence_time(linewidth_hz);
    r.lower_bound_ok = frame.t_code > 4.0 * r.t_ir;
    r.coherence_ok = frame.t_code < r.t_coh;
    return r;
}

}  // namespace pmdas::codes
