#include "modir/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace modir {

void Vec::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Vec::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Mat::Mat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows * cols) {
        throw std::invalid_argument("Mat: value count " + std::to_string(values_.size()) +
                                    " != " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

void Mat::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Mat::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("dot: dimension mismatch " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Vec matvec(const Mat& m, std::span<const double> x) {
    if (m.cols() != x.size()) throw std::invalid_argument("matvec: dimension mismatch");
    Vec y(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) y[r] = dot(m.row(r), x);
    return y;
}

Vec matvec_transposed(const Mat& m, std::span<const double> x) {
    if (m.rows() != x.size()) throw std::invalid_argument("matvec_transposed: dimension mismatch");
    Vec y(m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        if (x[r] == 0.0) continue;
        axpy(x[r], m.row(r), y.span());
    }
    return y;
}

void add_outer(Mat& m, std::span<const double> u, std::span<const double> v, double scale) {
    if (m.rows() != u.size() || m.cols() != v.size()) {
        throw std::invalid_argument("add_outer: dimension mismatch");
    }
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double ur = scale * u[r];
        if (ur == 0.0) continue;
        axpy(ur, v, m.row(r));
    }
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: dimension mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

std::array<double, 2> softmax2(std::array<double, 2> logits) {
    if (!std::isfinite(logits[0]) || !std::isfinite(logits[1])) {
        throw NumericalError("softmax2: non-finite logit");
    }
    const double m = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - m);
    const double e1 = std::exp(logits[1] - m);
    const double z = e0 + e1;
    return {e0 / z, e1 / z};
}

double log_sum_exp(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("log_sum_exp: empty input");
    if (xs.size() == 1) return xs[0];
    const double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) throw NumericalError("log_sum_exp: non-finite input");
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Rng

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) word = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return r * std::cos(theta);
}

Rng Rng::split(std::string_view stream) const {
    std::uint64_t s = seed_ ^ fnv1a64(stream);
    return Rng(splitmix64(s));
}

Rng::Snapshot Rng::snapshot() const {
    return Snapshot{seed_, state_, has_cached_normal_, cached_normal_};
}

Rng Rng::restore(const Snapshot& snap) {
    Rng r(snap.seed);
    r.state_ = snap.state;
    r.has_cached_normal_ = snap.has_cached_normal;
    r.cached_normal_ = snap.cached_normal;
    return r;
}

// ---------------------------------------------------------------------------

GradientCheck check_gradient(const std::function<double(std::span<const double>)>& fn,
                             std::span<const double> analytic_grad,
                             std::span<const double> point,
                             double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("check_gradient: eps must be positive");
    if (analytic_grad.size() != point.size()) {
        throw std::invalid_argument("check_gradient: gradient/point dimension mismatch");
    }
    GradientCheck out;
    std::vector<double> x(point.begin(), point.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + eps;
        const double fp = fn(x);
        x[i] = orig - eps;
        const double fm = fn(x);
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            out.finite = false;
            out.non_finite_index = i;
            out.max_relative_error = std::numeric_limits<double>::infinity();
            return out;
        }
        const double fd = (fp - fm) / (2.0 * eps);
        const double a = analytic_grad[i];
        const double err = std::abs(fd - a) / std::max({1.0, std::abs(fd), std::abs(a)});
        if (err > out.max_relative_error) {
            out.max_relative_error = err;
            out.worst_index = i;
        }
    }
    return out;
}

}  // namespace modir
