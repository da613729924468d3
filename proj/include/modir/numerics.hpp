#pragma once

// Dense linear algebra, stable nonlinear primitives, seeded randomness and
// finite-difference gradient checks shared by every other component.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace modir {

// Raised when a numeric precondition is violated (NaN/Inf inputs, diverged losses).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised for invalid user configuration (bad dims, infeasible counts, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dense vector of doubles.
class Vec {
public:
    Vec() = default;
    explicit Vec(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
    Vec(std::initializer_list<double> init) : values_(init) {}
    explicit Vec(std::vector<double> values) : values_(std::move(values)) {}
    explicit Vec(std::span<const double> values) : values_(values.begin(), values.end()) {}

    std::size_t dim() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    std::span<double> span() { return values_; }
    std::span<const double> span() const { return values_; }
    operator std::span<const double>() const { return values_; }

    auto begin() { return values_.begin(); }
    auto end() { return values_.end(); }
    auto begin() const { return values_.begin(); }
    auto end() const { return values_.end(); }

    const std::vector<double>& values() const { return values_; }

    void fill(double v);
    bool all_finite() const;

    friend bool operator==(const Vec&, const Vec&) = default;

private:
    std::vector<double> values_;
};

// Row-major dense matrix of doubles.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0);
    Mat(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    std::span<double> span() { return values_; }
    std::span<const double> span() const { return values_; }
    const std::vector<double>& values() const { return values_; }

    void fill(double v);
    bool all_finite() const;

    static Mat identity(std::size_t n);

    friend bool operator==(const Mat&, const Mat&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

double dot(std::span<const double> a, std::span<const double> b);

// y = M x
Vec matvec(const Mat& m, std::span<const double> x);
// y = M^T x
Vec matvec_transposed(const Mat& m, std::span<const double> x);
// M += scale * u v^T
void add_outer(Mat& m, std::span<const double> u, std::span<const double> v, double scale = 1.0);
// y += a x
void axpy(double a, std::span<const double> x, std::span<double> y);

double squared_norm(std::span<const double> a);

// Two-class softmax via max-shifted exponentials.
std::array<double, 2> softmax2(std::array<double, 2> logits);

// log(sum(exp(xs))) with max shift. Throws on empty input.
double log_sum_exp(std::span<const double> xs);

// Logistic sigmoid, evaluated on the numerically safe branch.
double sigmoid(double x);

// xoshiro256** seeded through splitmix64. The raw 64-bit sequence is fully
// specified by the seed, so draws agree bit-for-bit across platforms.
class Rng {
public:
    using State = std::array<std::uint64_t, 4>;

    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 bits of resolution.
    double uniform();
    double uniform(double lo, double hi);
    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n);
    // Standard normal via Box-Muller (one draw per call, the pair partner is cached).
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // Independent child generator identified by a stream tag.
    Rng split(std::string_view stream) const;

    std::uint64_t seed() const { return seed_; }
    const State& state() const { return state_; }

    // Full snapshot including the cached normal, for bit-exact resume.
    struct Snapshot {
        std::uint64_t seed = 0;
        State state{};
        bool has_cached_normal = false;
        double cached_normal = 0.0;
    };
    Snapshot snapshot() const;
    static Rng restore(const Snapshot& snap);

private:
    std::uint64_t seed_;
    State state_{};
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& x);
std::uint64_t fnv1a64(std::string_view bytes);

struct GradientCheck {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    bool finite = true;
    std::size_t non_finite_index = 0;
};

// Central finite differences per coordinate. Error per coordinate is
// |fd - analytic| / max(1, |fd|, |analytic|); the maximum is returned.
GradientCheck check_gradient(const std::function<double(std::span<const double>)>& fn,
                             std::span<const double> analytic_grad,
                             std::span<const double> point,
                             double eps = 1e-5);

}  // namespace modir
