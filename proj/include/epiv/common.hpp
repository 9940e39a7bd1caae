#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace epiv {

// ---- error types ----------------------------------------------------------

struct ConfigInvalid : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateAge : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UndefinedHazard : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InfiniteMean : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RejectionBudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonConvergent : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StepTooCoarse : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotAbsolutelyContinuous : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NoAtoms : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientReplications : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct HorizonTooShort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Ratios with a vanishing survival denominator evaluate to 0. This convention
// is applied uniformly across all modules.
inline double zero_div(double num, double den) {
    return den > 0.0 ? num / den : 0.0;
}

// ---- random streams -------------------------------------------------------

/// Counter-free splittable 64-bit stream (splitmix64). Replication r of a run
/// seeded with s draws from the stream derived from (s, r), so replications
/// are independent and individually reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

    static Rng for_replication(std::uint64_t seed, std::uint64_t rep) {
        Rng r(seed);
        r.state_ ^= mix(rep * 0xbf58476d1ce4e5b9ull + 0x94d049bb133111ebull);
        r.next();
        return r;
    }

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1].
    double uniform_pos() { return 1.0 - uniform(); }

    double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    std::uint64_t state_;
};

// ---- piecewise-linear curves ----------------------------------------------

/// Piecewise-linear function given by (t, value) knots with t strictly
/// increasing. Evaluation clamps to the first/last value outside the knot
/// range, so a single knot encodes a constant.
class Curve {
public:
    Curve() = default;
    explicit Curve(std::vector<std::pair<double, double>> knots)
        : knots_(std::move(knots)) {
        if (knots_.empty()) throw ConfigInvalid("curve needs at least one knot");
        for (std::size_t i = 1; i < knots_.size(); ++i)
            if (!(knots_[i].first > knots_[i - 1].first))
                throw ConfigInvalid("curve knots must be strictly increasing in t");
    }

    static Curve constant(double v) { return Curve({{0.0, v}}); }

    double operator()(double t) const {
        if (t <= knots_.front().first) return knots_.front().second;
        if (t >= knots_.back().first) return knots_.back().second;
        std::size_t lo = 0, hi = knots_.size() - 1;
        while (hi - lo > 1) {
            std::size_t mid = (lo + hi) / 2;
            (knots_[mid].first <= t ? lo : hi) = mid;
        }
        const auto& [t0, v0] = knots_[lo];
        const auto& [t1, v1] = knots_[hi];
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
    }

    double max_value() const {
        double m = 0.0;
        for (const auto& [t, v] : knots_) m = std::max(m, v);
        return m;
    }

    bool is_constant() const {
        for (const auto& [t, v] : knots_)
            if (v != knots_.front().second) return false;
        return true;
    }

    const std::vector<std::pair<double, double>>& knots() const { return knots_; }

private:
    std::vector<std::pair<double, double>> knots_;
};

// ---- quadrature -----------------------------------------------------------

/// Adaptive composite Simpson on [a, b] with absolute tolerance.
template <class F>
double adaptive_simpson(F&& f, double a, double b, double abs_tol = 1e-10,
                        int max_depth = 40) {
    auto simpson = [&](double lo, double hi, double flo, double fmid, double fhi) {
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    };
    struct Frame {
        double a, b, fa, fm, fb, whole, tol;
        int depth;
    };
    double m = 0.5 * (a + b);
    double fa = f(a), fm = f(m), fb = f(b);
    std::vector<Frame> stack{{a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), abs_tol, 0}};
    double total = 0.0;
    while (!stack.empty()) {
        Frame fr = stack.back();
        stack.pop_back();
        double mid = 0.5 * (fr.a + fr.b);
        double lm = 0.5 * (fr.a + mid), rm = 0.5 * (mid + fr.b);
        double flm = f(lm), frm = f(rm);
        double left = simpson(fr.a, mid, fr.fa, flm, fr.fm);
        double right = simpson(mid, fr.b, fr.fm, frm, fr.fb);
        double err = left + right - fr.whole;
        if (fr.depth >= max_depth || std::abs(err) < 15.0 * fr.tol) {
            total += left + right + err / 15.0;
        } else {
            stack.push_back({fr.a, mid, fr.fa, flm, fr.fm, left, fr.tol / 2, fr.depth + 1});
            stack.push_back({mid, fr.b, fr.fm, frm, fr.fb, right, fr.tol / 2, fr.depth + 1});
        }
    }
    return total;
}

/// Composite trapezoid over uniformly gridded samples with step dt.
inline double trapezoid(const std::vector<double>& v, double dt) {
    if (v.size() < 2) return 0.0;
    double s = 0.5 * (v.front() + v.back());
    for (std::size_t i = 1; i + 1 < v.size(); ++i) s += v[i];
    return s * dt;
}

inline constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace epiv
