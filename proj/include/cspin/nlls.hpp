#pragma once

// Small dense nonlinear least-squares engine used by every fitting recipe in
// the library: optional coarse grid seeding, a bounded Nelder-Mead pass to
// escape bad basins, then damped Gauss-Newton with numerical Jacobians.
// Uncertainties come from the inverse Gauss-Newton normal matrix scaled by
// the residual variance. Deterministic throughout.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace cspin::fit {

struct FitResult {
    std::vector<std::string> names;
    std::vector<double> estimates;
    std::vector<double> sigmas;
    double rss = 0.0;
    bool converged = false;
    int iterations = 0;
    std::vector<std::string> warnings;

    std::size_t index(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        throw std::out_of_range("FitResult: no parameter '" + name + "'");
    }
    double estimate(const std::string& name) const { return estimates[index(name)]; }
    double sigma(const std::string& name) const { return sigmas[index(name)]; }
    void warn(std::string msg) { warnings.push_back(std::move(msg)); }
};

struct Bounds {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
};

struct NllsOptions {
    int max_iterations = 200;      // Gauss-Newton step budget
    int simplex_iterations = 400;  // Nelder-Mead budget, 0 skips the stage
    double ftol = 1e-12;           // relative RSS decrease considered converged
    double xtol = 1e-10;           // relative step size considered converged
    std::vector<double> typical;   // per-parameter magnitude scales; empty = from init
};

class solver_error : public std::runtime_error {
  public:
    solver_error(const std::string& msg, FitResult partial)
        : std::runtime_error(msg), best(std::move(partial)) {}
    FitResult best; // best point reached before the failure
};

class iteration_limit_error : public solver_error {
    using solver_error::solver_error;
};

class singular_normal_matrix_error : public solver_error {
    using solver_error::solver_error;
};

using ResidualFn = std::function<std::vector<double>(const std::vector<double>&)>;

namespace detail {

inline void clamp_into(std::vector<double>& p, const std::vector<Bounds>& b) {
    for (std::size_t i = 0; i < p.size(); ++i)
        p[i] = std::clamp(p[i], b[i].lo, b[i].hi);
}

inline double rss_of(const std::vector<double>& r) {
    double s = 0.0;
    for (double v : r) {
        if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
        s += v * v;
    }
    return s;
}

// Characteristic magnitude used for finite-difference steps and step-size
// convergence tests.
inline double param_scale(double p, double typical) {
    return std::max(std::abs(p), typical);
}

inline Eigen::MatrixXd jacobian(const ResidualFn& fn, const std::vector<double>& p,
                                const std::vector<double>& scales,
                                const std::vector<Bounds>& bounds, std::size_t m) {
    const std::size_t n = p.size();
    Eigen::MatrixXd jac(m, n);
    const double rel = std::sqrt(std::numeric_limits<double>::epsilon());
    for (std::size_t j = 0; j < n; ++j) {
        const double h = rel * param_scale(p[j], scales[j]);
        auto hi = p, lo = p;
        hi[j] = std::min(p[j] + h, bounds[j].hi);
        lo[j] = std::max(p[j] - h, bounds[j].lo);
        const double span = hi[j] - lo[j];
        if (span <= 0.0)
            throw std::invalid_argument("jacobian: bounds pin parameter " +
                                        std::to_string(j) + " to a point");
        const auto rh = fn(hi), rl = fn(lo);
        if (rh.size() != m || rl.size() != m)
            throw std::logic_error("jacobian: residual size changed between calls");
        for (std::size_t i = 0; i < m; ++i) jac(i, j) = (rh[i] - rl[i]) / span;
    }
    return jac;
}

// One pass of bounded Nelder-Mead on the RSS surface.
inline std::vector<double> simplex_minimize(const ResidualFn& fn, std::vector<double> p0,
                                            const std::vector<double>& scales,
                                            const std::vector<Bounds>& bounds, int budget,
                                            int& evals) {
    const std::size_t n = p0.size();
    struct Vertex {
        std::vector<double> x;
        double f;
    };
    auto eval = [&](std::vector<double> x) {
        clamp_into(x, bounds);
        ++evals;
        return Vertex{x, rss_of(fn(x))};
    };
    std::vector<Vertex> simplex;
    simplex.push_back(eval(p0));
    for (std::size_t i = 0; i < n; ++i) {
        auto x = p0;
        x[i] += 0.05 * param_scale(p0[i], scales[i]);
        if (x[i] > bounds[i].hi) x[i] = p0[i] - 0.05 * param_scale(p0[i], scales[i]);
        simplex.push_back(eval(x));
    }
    auto by_f = [](const Vertex& a, const Vertex& b) { return a.f < b.f; };
    for (int it = 0; it < budget; ++it) {
        std::sort(simplex.begin(), simplex.end(), by_f);
        if (simplex.back().f - simplex.front().f <=
            1e-14 * (std::abs(simplex.front().f) + 1e-300))
            break;
        std::vector<double> centroid(n, 0.0);
        for (std::size_t v = 0; v < n; ++v)
            for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[v].x[i] / double(n);
        auto blend = [&](double coeff) {
            std::vector<double> x(n);
            for (std::size_t i = 0; i < n; ++i)
                x[i] = centroid[i] + coeff * (centroid[i] - simplex.back().x[i]);
            return eval(x);
        };
        Vertex refl = blend(1.0);
        if (refl.f < simplex.front().f) {
            Vertex expd = blend(2.0);
            simplex.back() = expd.f < refl.f ? expd : refl;
        } else if (refl.f < simplex[n - 1].f) {
            simplex.back() = refl;
        } else {
            Vertex contr = blend(-0.5);
            if (contr.f < simplex.back().f) {
                simplex.back() = contr;
            } else {
                for (std::size_t v = 1; v <= n; ++v) {
                    for (std::size_t i = 0; i < n; ++i)
                        simplex[v].x[i] = 0.5 * (simplex[v].x[i] + simplex[0].x[i]);
                    simplex[v] = eval(simplex[v].x);
                }
            }
        }
    }
    std::sort(simplex.begin(), simplex.end(), by_f);
    return simplex.front().x;
}

} // namespace detail

// Evaluate the residual norm on a list of candidate starting points and
// return the best one. Used by recipes for coarse grid seeding.
inline std::vector<double> best_of_grid(const ResidualFn& fn,
                                        const std::vector<std::vector<double>>& candidates) {
    if (candidates.empty()) throw std::invalid_argument("best_of_grid: no candidates");
    std::size_t best = 0;
    double best_rss = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double r = detail::rss_of(fn(candidates[i]));
        if (r < best_rss) {
            best_rss = r;
            best = i;
        }
    }
    return candidates[best];
}

inline FitResult nlls_solve(const ResidualFn& fn, std::vector<double> init,
                            std::vector<std::string> names, std::vector<Bounds> bounds = {},
                            NllsOptions opts = {}) {
    const std::size_t n = init.size();
    if (n == 0) throw std::invalid_argument("nlls_solve: no parameters");
    if (!names.empty() && names.size() != n)
        throw std::invalid_argument("nlls_solve: name/parameter count mismatch");
    if (names.empty())
        for (std::size_t i = 0; i < n; ++i) names.push_back("p" + std::to_string(i));
    if (bounds.empty()) bounds.assign(n, Bounds{});
    if (bounds.size() != n)
        throw std::invalid_argument("nlls_solve: bounds/parameter count mismatch");
    for (std::size_t i = 0; i < n; ++i)
        if (!(bounds[i].lo <= bounds[i].hi))
            throw std::invalid_argument("nlls_solve: inverted bounds");
    detail::clamp_into(init, bounds);

    auto r0 = fn(init);
    const std::size_t m = r0.size();
    if (m < n)
        throw std::invalid_argument("nlls_solve: fewer residuals than parameters");
    double rss = detail::rss_of(r0);
    if (!std::isfinite(rss))
        throw std::invalid_argument("nlls_solve: non-finite residuals at the start point");

    FitResult out;
    out.names = names;

    std::vector<double> scales(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = i < opts.typical.size() ? std::abs(opts.typical[i]) : 0.0;
        scales[i] = std::max({t, std::abs(init[i]), 1e-12});
    }

    int evals = 0;
    auto p = init;
    if (opts.simplex_iterations > 0) {
        p = detail::simplex_minimize(fn, p, scales, bounds, opts.simplex_iterations, evals);
        rss = detail::rss_of(fn(p));
    }
    double lambda = 1e-10;
    bool converged = false;
    int it = 0;
    for (; it < opts.max_iterations && !converged; ++it) {
        const auto res = fn(p);
        Eigen::Map<const Eigen::VectorXd> r(res.data(), long(m));
        const Eigen::MatrixXd jac = detail::jacobian(fn, p, scales, bounds, m);
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * r;

        // parameters sitting on a bound with the gradient pushing outward are
        // frozen for this iteration, so the joint step stays consistent
        std::vector<bool> pinned(n, false);
        double free_gradient = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double tol = 1e-12 * detail::param_scale(p[i], scales[i]);
            if (bounds.size() == n) {
                if (p[i] <= bounds[i].lo + tol && jtr[long(i)] > 0.0) pinned[i] = true;
                if (p[i] >= bounds[i].hi - tol && jtr[long(i)] < 0.0) pinned[i] = true;
            }
            if (!pinned[i]) free_gradient = std::max(free_gradient, std::abs(jtr[long(i)]));
        }
        if (free_gradient <= 1e-300) {
            converged = true;
            break;
        }

        bool stepped = false;
        for (int attempt = 0; attempt < 40 && !stepped; ++attempt) {
            Eigen::MatrixXd damped = jtj;
            Eigen::VectorXd rhs = -jtr;
            for (std::size_t d = 0; d < n; ++d)
                damped(long(d), long(d)) += lambda * std::max(jtj(long(d), long(d)), 1e-30);
            for (std::size_t d = 0; d < n; ++d) {
                if (!pinned[d]) continue;
                damped.row(long(d)).setZero();
                damped.col(long(d)).setZero();
                damped(long(d), long(d)) = 1.0;
                rhs[long(d)] = 0.0;
            }
            Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
            Eigen::VectorXd step = ldlt.solve(rhs);
            if (ldlt.info() != Eigen::Success || !step.allFinite()) {
                lambda = std::max(lambda * 10.0, 1e-8);
                continue;
            }
            auto trial = p;
            for (std::size_t i = 0; i < n; ++i) trial[i] += step[long(i)];
            detail::clamp_into(trial, bounds);
            const double trial_rss = detail::rss_of(fn(trial));
            ++evals;
            if (trial_rss <= rss) {
                double max_rel_step = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    max_rel_step =
                        std::max(max_rel_step, std::abs(trial[i] - p[i]) /
                                                   detail::param_scale(p[i], scales[i]));
                const double drop = rss - trial_rss;
                p = trial;
                rss = trial_rss;
                lambda = std::max(lambda / 3.0, 1e-12);
                stepped = true;
                if (max_rel_step < opts.xtol || drop <= opts.ftol * std::max(rss, 1e-300))
                    converged = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e12) {
                    // cannot improve in any damped direction: treat as converged
                    stepped = true;
                    converged = true;
                }
            }
        }
        if (!stepped) {
            out.estimates = p;
            out.rss = rss;
            out.iterations = it + evals;
            throw singular_normal_matrix_error(
                "nlls_solve: normal matrix remained singular under damping", out);
        }
    }

    out.estimates = p;
    out.rss = rss;
    out.iterations = it + evals;
    out.converged = converged;
    if (!converged) {
        out.sigmas.assign(n, std::numeric_limits<double>::quiet_NaN());
        throw iteration_limit_error("nlls_solve: iteration limit reached", out);
    }

    // curvature-based uncertainties at the solution
    const Eigen::MatrixXd jac = detail::jacobian(fn, p, scales, bounds, m);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const double variance = m > n ? rss / double(m - n) : 0.0;
    if (m == n) out.warn("no residual degrees of freedom; uncertainties set to zero");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jtj);
    const Eigen::VectorXd ev = eig.eigenvalues();
    const double cutoff = ev.size() ? std::abs(ev[ev.size() - 1]) * 1e-14 : 0.0;
    bool dropped = false;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(long(n), long(n));
    for (long k = 0; k < ev.size(); ++k) {
        if (ev[k] <= cutoff) {
            dropped = true;
            continue;
        }
        cov += eig.eigenvectors().col(k) * eig.eigenvectors().col(k).transpose() / ev[k];
    }
    if (dropped)
        out.warn("singular normal matrix at the solution; "
                 "some uncertainties are lower bounds");
    out.sigmas.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.sigmas[i] = std::sqrt(std::max(0.0, cov(long(i), long(i)) * variance));

    for (std::size_t i = 0; i < n; ++i) {
        const double span = bounds[i].hi - bounds[i].lo;
        const double tol =
            std::isfinite(span) ? 1e-9 * span : 1e-9 * detail::param_scale(p[i], scales[i]);
        if (std::isfinite(bounds[i].lo) && p[i] - bounds[i].lo <= tol)
            out.warn("parameter '" + names[i] + "' pinned at its lower bound");
        else if (std::isfinite(bounds[i].hi) && bounds[i].hi - p[i] <= tol)
            out.warn("parameter '" + names[i] + "' pinned at its upper bound");
    }
    return out;
}

} // namespace cspin::fit
