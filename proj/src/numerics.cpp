#include "bandalloc/numerics.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "bandalloc/errors.hpp"

namespace bandalloc {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

void Tolerance::validate() const {
    if (!(abs_tol > 0.0) || !std::isfinite(abs_tol) || !(rel_tol > 0.0) ||
        !std::isfinite(rel_tol) || max_iter < 1) {
        throw DomainError("Tolerance: tolerances must be finite and positive, max_iter >= 1");
    }
}

RngStream RngStream::derive(std::uint64_t child) const {
    return RngStream{seed, mix64(stream_id * kGolden + mix64(child + 0x632be59bd9b4e019ULL))};
}

Rng::Rng(const RngStream& stream)
    : key_(mix64(mix64(stream.seed + kGolden) ^ (stream.stream_id * 0xd1b54a32d192ed03ULL))) {}

std::uint64_t Rng::next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw DomainError("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(next_u64());
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return lo + static_cast<std::int64_t>(v % span);
}

double Rng::normal() {
    // Box-Muller, one output per call.
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gamma(double shape) {
    if (!(shape > 0.0)) throw DomainError("gamma: shape must be positive");
    if (shape < 1.0) {
        const double u = uniform01();
        return gamma(shape + 1.0) * std::pow(u > 0.0 ? u : 0x1.0p-53, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform01();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double q_function(double x) {
    return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

double inverse_q(double p, const Tolerance& tol) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("inverse_q: p must lie in (0, 1)");
    tol.validate();
    // Absolute tolerance is scaled by p so that tail probabilities keep
    // their relative accuracy.
    const Tolerance scaled{tol.abs_tol * p, tol.rel_tol, tol.max_iter};
    return bisect(q_function, -40.0, 40.0, p, scaled);
}

double dbm_to_watts(double p_dbm) {
    return std::pow(10.0, p_dbm / 10.0) / 1000.0;
}

double watts_to_dbm(double p_watts) {
    return 10.0 * std::log10(p_watts * 1000.0);
}

double db_to_linear(double db) {
    return std::pow(10.0, db / 10.0);
}

Bracket bisect_bracket(const std::function<double(double)>& f, double lo, double hi,
                       double target, const Tolerance& tol) {
    tol.validate();
    if (!(lo <= hi)) throw DomainError("bisect: lo must not exceed hi");
    double flo = f(lo) - target;
    double fhi = f(hi) - target;
    if (flo == 0.0) return {lo, lo, lo, lo, 0};
    if (fhi == 0.0) return {hi, hi, hi, hi, 0};
    if ((flo > 0.0) == (fhi > 0.0)) {
        throw BracketError("bisect: f(lo) - target and f(hi) - target have the same sign");
    }
    for (int it = 1; it <= tol.max_iter; ++it) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) return {lo, hi, mid, fhi >= 0.0 ? hi : lo, it - 1};
        const double fmid = f(mid) - target;
        if ((fmid > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
            fhi = fmid;
        }
        const double upper = fhi >= 0.0 ? hi : lo;
        if (std::abs(fmid) <= tol.abs_tol || fmid == 0.0) {
            return {lo, hi, mid, fmid >= 0.0 ? mid : upper, it};
        }
        if (hi - lo <= tol.rel_tol * std::abs(mid)) {
            return {lo, hi, mid, upper, it};
        }
    }
    throw ConvergenceError("bisect: max_iter exceeded", lo + 0.5 * (hi - lo));
}

double bisect(const std::function<double(double)>& f, double lo, double hi, double target,
              const Tolerance& tol) {
    return bisect_bracket(f, lo, hi, target, tol).x;
}

double central_diff(const std::function<double(double)>& f, double x, double h) {
    if (!(h > 0.0)) throw DomainError("central_diff: step must be positive");
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

double central_diff2(const std::function<double(double)>& f, double x, double h) {
    if (!(h > 0.0)) throw DomainError("central_diff2: step must be positive");
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

}  // namespace bandalloc
