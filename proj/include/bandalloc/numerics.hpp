#pragma once

#include <cstdint>
#include <functional>

namespace bandalloc {

/// Stopping rule shared by the root finders.
struct Tolerance {
    double abs_tol = 1e-9;
    double rel_tol = 1e-9;
    int max_iter = 200;

    void validate() const;
};

/// Immutable descriptor of a reproducible random stream.
///
/// A stream is identified by (seed, stream_id). Sub-streams are derived by
/// hashing a child index into the stream id, so the values drawn for sample
/// i never depend on how many values were consumed for samples 0..i-1.
struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;

    RngStream derive(std::uint64_t child) const;
    bool operator==(const RngStream&) const = default;
};

/// Well-known stream ids. Keeping these apart is what makes task sampling,
/// channel sampling, parameter init and batch selection independent.
namespace streams {
inline constexpr std::uint64_t kTasks = 0x7461736bULL;
inline constexpr std::uint64_t kChannels = 0x6368616eULL;
inline constexpr std::uint64_t kParams = 0x7061726dULL;
inline constexpr std::uint64_t kBatches = 0x62617463ULL;
inline constexpr std::uint64_t kEval = 0x6576616cULL;
inline constexpr std::uint64_t kFading = 0x66616465ULL;
}  // namespace streams

/// Counter-based generator (splitmix64 over a per-stream key).
///
/// The n-th output is a pure function of (seed, stream_id, n). Samplers are
/// written out here rather than taken from <random> so that sequences are
/// identical across standard library implementations.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(const RngStream& stream);

    std::uint64_t next_u64();
    double uniform01();  // [0, 1)
    double uniform(double lo, double hi);
    /// Uniform integer in the closed range [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    /// Gamma(shape, scale=1), Marsaglia-Tsang.
    double gamma(double shape);

    std::uint64_t counter() const { return counter_; }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() { return next_u64(); }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

/// Gaussian tail probability Q(x) = P(N(0,1) > x).
double q_function(double x);

/// x such that Q(x) = p. Throws DomainError unless 0 < p < 1.
double inverse_q(double p, const Tolerance& tol = {});

double dbm_to_watts(double p_dbm);
double watts_to_dbm(double p_watts);
double db_to_linear(double db);

struct Bracket {
    double lo;
    double hi;
    double x;      // returned iterate
    double upper;  // endpoint of the final bracket where f - target >= 0
    int iterations;
};

/// Bisection for f(x) = target on a sign-changing bracket. Works for either
/// monotone direction. Throws BracketError when f(lo)-target and
/// f(hi)-target share a sign and ConvergenceError after max_iter halvings.
Bracket bisect_bracket(const std::function<double(double)>& f, double lo, double hi,
                       double target, const Tolerance& tol = {});

double bisect(const std::function<double(double)>& f, double lo, double hi, double target,
              const Tolerance& tol = {});

double central_diff(const std::function<double(double)>& f, double x, double h);

/// Second central difference (f(x+h) - 2 f(x) + f(x-h)) / h^2.
double central_diff2(const std::function<double(double)>& f, double x, double h);

}  // namespace bandalloc
