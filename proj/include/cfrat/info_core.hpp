// Exact discrete information theory over small (X1, X2, Y1) joints, plus the
// counterfactual-augmentation benefit analysis built on top of it.
//
// Conventions: all entropies and mutual informations are in base-2 bits,
// 0*log(0) is taken as 0, and conditioning on a zero-probability event is a
// hard error rather than a silent NaN.
#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfrat {

enum class Var { X1 = 0, X2 = 1, Y1 = 2 };

inline const char* var_name(Var v) {
    switch (v) {
        case Var::X1: return "X1";
        case Var::X2: return "X2";
        default: return "Y1";
    }
}

inline double xlog2x(double p) { return p <= 0.0 ? 0.0 : p * std::log2(p); }

// Exact probability table over (X1, X2, Y1). Immutable after construction.
class JointDistribution {
public:
    static constexpr double kMassTolerance = 1e-12;

    JointDistribution(int nx1, int nx2, int ny, std::vector<double> cells)
        : nx1_(nx1), nx2_(nx2), ny_(ny), p_(std::move(cells)) {
        if (nx1_ < 1 || nx2_ < 1 || ny_ < 1)
            throw std::invalid_argument("JointDistribution: support sizes must be positive");
        if (p_.size() != static_cast<std::size_t>(nx1_) * nx2_ * ny_)
            throw std::invalid_argument("JointDistribution: cell count does not match support");
        double total = 0.0;
        for (double v : p_) {
            if (!(v >= 0.0))
                throw std::invalid_argument("JointDistribution: negative or non-finite cell");
            total += v;
        }
        if (std::abs(total - 1.0) > kMassTolerance)
            throw std::invalid_argument("JointDistribution: total mass " + std::to_string(total) +
                                        " not within 1e-12 of 1");
    }

    int size(Var v) const {
        switch (v) {
            case Var::X1: return nx1_;
            case Var::X2: return nx2_;
            default: return ny_;
        }
    }

    double cell(int x1, int x2, int y) const {
        return p_[(static_cast<std::size_t>(x1) * nx2_ + x2) * ny_ + y];
    }

    const std::vector<double>& cells() const { return p_; }

    std::vector<double> marginal(Var v) const {
        std::vector<double> m(size(v), 0.0);
        for_each_cell([&](int x1, int x2, int y, double p) { m[index_of(v, x1, x2, y)] += p; });
        return m;
    }

    // p(a, b) as a row-major |A| x |B| table.
    std::vector<double> pair_marginal(Var a, Var b) const {
        if (a == b) throw std::invalid_argument("pair_marginal: variables must differ");
        std::vector<double> m(static_cast<std::size_t>(size(a)) * size(b), 0.0);
        for_each_cell([&](int x1, int x2, int y, double p) {
            m[static_cast<std::size_t>(index_of(a, x1, x2, y)) * size(b) + index_of(b, x1, x2, y)] += p;
        });
        return m;
    }

    // p(target | given = value). Conditioning on a zero-mass event throws.
    std::vector<double> conditional(Var target, Var given, int value) const {
        if (target == given) throw std::invalid_argument("conditional: variables must differ");
        const auto pair = pair_marginal(target, given);
        const int nt = size(target);
        const int ng = size(given);
        if (value < 0 || value >= ng) throw std::invalid_argument("conditional: value out of range");
        double mass = 0.0;
        for (int t = 0; t < nt; ++t) mass += pair[static_cast<std::size_t>(t) * ng + value];
        if (mass <= kMassTolerance)
            throw std::domain_error(std::string("conditional: conditioning on zero-probability event ") +
                                    var_name(given) + "=" + std::to_string(value));
        std::vector<double> out(nt);
        for (int t = 0; t < nt; ++t) out[t] = pair[static_cast<std::size_t>(t) * ng + value] / mass;
        return out;
    }

private:
    template <typename F>
    void for_each_cell(F&& f) const {
        std::size_t i = 0;
        for (int x1 = 0; x1 < nx1_; ++x1)
            for (int x2 = 0; x2 < nx2_; ++x2)
                for (int y = 0; y < ny_; ++y) f(x1, x2, y, p_[i++]);
    }

    static int index_of(Var v, int x1, int x2, int y) {
        switch (v) {
            case Var::X1: return x1;
            case Var::X2: return x2;
            default: return y;
        }
    }

    int nx1_, nx2_, ny_;
    std::vector<double> p_;
};

struct InformationMeasures {
    double entropy;               // H(target), bits
    double conditional_entropy;   // H(target | condition), bits
    double mutual_information;    // H(target) - H(target | condition), bits
};

// H(target), H(target | condition) and their difference, all in bits.
inline InformationMeasures information_measures(const JointDistribution& joint, Var target,
                                                Var condition) {
    if (target == condition)
        throw std::invalid_argument("information_measures: target and condition must differ");
    const auto pt = joint.marginal(target);
    double h = 0.0;
    for (double p : pt) h -= xlog2x(p);

    // H(T|C) = -sum_{t,c} p(t,c) log2( p(t,c) / p(c) ), zero-mass terms skipped.
    const auto pair = joint.pair_marginal(target, condition);
    const int nt = joint.size(target);
    const int nc = joint.size(condition);
    std::vector<double> pc(nc, 0.0);
    for (int t = 0; t < nt; ++t)
        for (int c = 0; c < nc; ++c) pc[c] += pair[static_cast<std::size_t>(t) * nc + c];
    double hc = 0.0;
    for (int t = 0; t < nt; ++t)
        for (int c = 0; c < nc; ++c) {
            const double ptc = pair[static_cast<std::size_t>(t) * nc + c];
            if (ptc > 0.0) hc -= ptc * std::log2(ptc / pc[c]);
        }
    return {h, hc, h - hc};
}

namespace detail {

// Augmented pair joint p^a(x, y) = p(x) * [ w * p(y|x) + (1-w) * p(y) ],
// i.e. the original conditional mixed toward the marginal with weight (1-w).
// Zero-mass x slices stay zero; no conditional is ever formed for them.
inline std::vector<double> mixed_pair(const JointDistribution& joint, Var x, double toward_conditional) {
    const int nx = joint.size(x);
    const int ny = joint.size(Var::Y1);
    const auto pair = joint.pair_marginal(x, Var::Y1);  // p(x, y)
    const auto px = joint.marginal(x);
    const auto py = joint.marginal(Var::Y1);
    std::vector<double> out(static_cast<std::size_t>(nx) * ny, 0.0);
    for (int xv = 0; xv < nx; ++xv) {
        if (px[xv] <= 0.0) continue;
        for (int y = 0; y < ny; ++y) {
            const double cond = pair[static_cast<std::size_t>(xv) * ny + y] / px[xv];
            out[static_cast<std::size_t>(xv) * ny + y] =
                px[xv] * (toward_conditional * cond + (1.0 - toward_conditional) * py[y]);
        }
    }
    return out;
}

}  // namespace detail

// The augmented-dataset joint for selector error rate alpha:
//   p^a(y | x1) = alpha * p(y) + (1 - alpha) * p(y | x1)
//   p^a(y | x2) = (1 - alpha) * p(y) + alpha * p(y | x2)
// with all single-variable marginals preserved. Only the two (Xi, Y1) pairs
// are constrained; the returned table couples X1 and X2 as conditionally
// independent given Y1, which realizes both pair marginals exactly.
inline JointDistribution cda_mix_conditionals(const JointDistribution& joint, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("cda_mix_conditionals: alpha must be in [0,1]");
    const int n1 = joint.size(Var::X1);
    const int n2 = joint.size(Var::X2);
    const int ny = joint.size(Var::Y1);
    const auto pair1 = detail::mixed_pair(joint, Var::X1, 1.0 - alpha);
    const auto pair2 = detail::mixed_pair(joint, Var::X2, alpha);
    const auto py = joint.marginal(Var::Y1);

    std::vector<double> cells(static_cast<std::size_t>(n1) * n2 * ny, 0.0);
    std::size_t i = 0;
    for (int x1 = 0; x1 < n1; ++x1)
        for (int x2 = 0; x2 < n2; ++x2)
            for (int y = 0; y < ny; ++y, ++i) {
                if (py[y] <= 0.0) continue;
                cells[i] = pair1[static_cast<std::size_t>(x1) * ny + y] *
                           pair2[static_cast<std::size_t>(x2) * ny + y] / py[y];
            }
    // Renormalize away accumulated rounding so the constructor's mass check holds.
    double total = 0.0;
    for (double v : cells) total += v;
    if (total > 0.0)
        for (double& v : cells) v /= total;
    return JointDistribution(n1, n2, ny, std::move(cells));
}

// Net benefit of augmentation at error rate alpha, in signed bits:
//   dI(X2,Y1) - dI(X1,Y1)  =  H^a(Y|X2) - H(Y|X2) - H^a(Y|X1) + H(Y|X1)
// Positive means augmentation removes more spurious information than it
// costs in target information.
inline double cda_benefit(const JointDistribution& joint, double alpha) {
    const JointDistribution aug = cda_mix_conditionals(joint, alpha);
    const auto orig1 = information_measures(joint, Var::Y1, Var::X1);
    const auto orig2 = information_measures(joint, Var::Y1, Var::X2);
    const auto aug1 = information_measures(aug, Var::Y1, Var::X1);
    const auto aug2 = information_measures(aug, Var::Y1, Var::X2);
    return (aug2.conditional_entropy - orig2.conditional_entropy) -
           (aug1.conditional_entropy - orig1.conditional_entropy);
}

// Binary scenario parametrized by marginals and the two Y-given-X conditionals.
// The implied 2x2x2 joint must be a valid distribution.
struct BinaryScenario {
    double p_y1;        // p(Y1 = 1)
    double p_x1;        // p(X1 = 1)
    double p_x2;        // p(X2 = 1)
    double p_y1_gx1;    // p(Y1 = 1 | X1 = 1)
    double p_y1_gx2;    // p(Y1 = 1 | X2 = 1)

    BinaryScenario(double py, double px1, double px2, double py_gx1, double py_gx2)
        : p_y1(py), p_x1(px1), p_x2(px2), p_y1_gx1(py_gx1), p_y1_gx2(py_gx2) {
        for (double v : {py, px1, px2, py_gx1, py_gx2})
            if (!(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument("BinaryScenario: probabilities must be in [0,1]");
        check_pair(px1, py_gx1, "X1");
        check_pair(px2, py_gx2, "X2");
    }

    // Full joint with X1 and X2 conditionally independent given Y1.
    JointDistribution to_joint() const {
        const auto pair1 = pair(p_x1, p_y1_gx1);
        const auto pair2 = pair(p_x2, p_y1_gx2);
        const double py[2] = {1.0 - p_y1, p_y1};
        std::vector<double> cells(8, 0.0);
        std::size_t i = 0;
        for (int x1 = 0; x1 < 2; ++x1)
            for (int x2 = 0; x2 < 2; ++x2)
                for (int y = 0; y < 2; ++y, ++i) {
                    if (py[y] <= 0.0) continue;
                    cells[i] = pair1[x1][y] * pair2[x2][y] / py[y];
                }
        double total = 0.0;
        for (double v : cells) total += v;
        for (double& v : cells) v /= total;
        return JointDistribution(2, 2, 2, std::move(cells));
    }

private:
    // p(x, y) cells for one feature; all four must be valid probabilities.
    std::array<std::array<double, 2>, 2> pair(double px, double py_gx) const {
        const double p11 = px * py_gx;
        const double p10 = px - p11;
        const double p01 = p_y1 - p11;       // mass at x=0, y=1
        const double p00 = 1.0 - p11 - p10 - p01;
        return {{{p00, p01}, {p10, p11}}};
    }

    void check_pair(double px, double py_gx, const char* which) const {
        const auto c = pair(px, py_gx);
        for (const auto& row : c)
            for (double v : row)
                if (v < -1e-12 || v > 1.0 + 1e-12)
                    throw std::invalid_argument(std::string("BinaryScenario: infeasible parameters for ") +
                                                which + " (implied p(Y1|" + which + "=0) outside [0,1])");
    }
};

struct BenefitCurve {
    struct Point {
        double alpha;
        double benefit_bits;
    };
    std::vector<Point> points;
};

inline BenefitCurve benefit_curve(const JointDistribution& joint, const std::vector<double>& alphas) {
    BenefitCurve curve;
    curve.points.reserve(alphas.size());
    double prev = -1.0;
    for (double a : alphas) {
        if (!(a >= 0.0 && a <= 1.0))
            throw std::invalid_argument("benefit_curve: alpha grid must lie in [0,1]");
        if (a <= prev) throw std::invalid_argument("benefit_curve: alpha grid must be strictly increasing");
        prev = a;
        const double b = cda_benefit(joint, a);
        if (!std::isfinite(b)) throw std::runtime_error("benefit_curve: non-finite benefit");
        curve.points.push_back({a, b});
    }
    return curve;
}

inline BenefitCurve benefit_curve(const BinaryScenario& scenario, const std::vector<double>& alphas) {
    return benefit_curve(scenario.to_joint(), alphas);
}

inline std::vector<double> default_alpha_grid(double step = 0.01) {
    std::vector<double> grid;
    const int n = static_cast<int>(std::llround(1.0 / step));
    grid.reserve(n + 1);
    for (int i = 0; i <= n; ++i) grid.push_back(static_cast<double>(i) * step);
    grid.back() = 1.0;
    return grid;
}

// Largest alpha at which the benefit is still positive (the "error budget").
// Returns 0 if the benefit is never positive, 1 if it never turns negative.
inline double error_budget(const JointDistribution& joint, double tol = 1e-9) {
    double lo = 0.0, hi = 1.0;
    if (cda_benefit(joint, 0.0) <= 0.0) return 0.0;
    if (cda_benefit(joint, 1.0) >= 0.0) return 1.0;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (cda_benefit(joint, mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace cfrat
