#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "arq/errors.hpp"
#include "arq/queueing.hpp"
#include "arq/rng.hpp"

namespace arq {

struct SolverOptions {
    int max_iterations = 10'000;
    double gradient_tolerance = 1e-8;   // infinity norm of the projected gradient
    int multistart_count = 8;
    bool integer_refinement = true;
    double oracle_grid_step = 0.25;     // certification / seeding grid
    std::uint64_t seed = 1;

    void validate() const {
        if (max_iterations < 1) throw std::invalid_argument("max_iterations must be positive");
        if (!(gradient_tolerance > 0.0))
            throw std::invalid_argument("gradient_tolerance must be positive");
        if (multistart_count < 1)
            throw std::invalid_argument("multistart_count must be at least 1");
        if (!(oracle_grid_step > 0.0))
            throw std::invalid_argument("oracle_grid_step must be positive");
    }
};

struct SolveResult {
    Allocation allocation;
    CostBreakdown cost;
    double kkt_residual = std::numeric_limits<double>::infinity();
    bool converged = false;
    std::optional<bool> in_convex_region;        // PerHop mode only
    std::vector<std::string> active_constraints;
    std::optional<Allocation> continuous_allocation;  // pre-refinement solution
    std::optional<double> continuous_cost;
};

namespace detail {

// Projection onto { lo <= x_i <= hi, sum x_i <= budget }: clip, then bisect
// the shift tau with sum clip(x - tau) = budget, then settle the residual on
// the unclamped coordinates so the budget holds to within 1e-12.
inline void project_box_budget(std::vector<double>& x, double lo, double hi, double budget) {
    for (double& v : x) v = std::clamp(v, lo, hi);
    double sum = 0.0;
    for (double v : x) sum += v;
    if (sum <= budget + 1e-15) return;

    double tau_lo = 0.0, tau_hi = 0.0;
    for (double v : x) tau_hi = std::max(tau_hi, v - lo);
    for (int it = 0; it < 128; ++it) {
        const double tau = 0.5 * (tau_lo + tau_hi);
        double s = 0.0;
        for (double v : x) s += std::clamp(v - tau, lo, hi);
        (s > budget ? tau_lo : tau_hi) = tau;
    }
    const double tau = 0.5 * (tau_lo + tau_hi);
    for (double& v : x) v = std::clamp(v - tau, lo, hi);

    for (int pass = 0; pass < 4; ++pass) {
        double s = 0.0;
        int free_count = 0;
        for (double v : x) {
            s += v;
            if (v > lo + 1e-13 && v < hi - 1e-13) ++free_count;
        }
        const double excess = s - budget;
        if (std::abs(excess) <= 1e-12 || free_count == 0) break;
        const double shift = excess / static_cast<double>(free_count);
        for (double& v : x)
            if (v > lo + 1e-13 && v < hi - 1e-13) v = std::clamp(v - shift, lo, hi);
    }
    double s = 0.0;
    for (double v : x) s += v;
    if (s > budget) {
        auto it = std::max_element(x.begin(), x.end());
        *it = std::max(lo, *it - (s - budget));
    }
}

// Cost and (sub)gradient of the allocation objective with prebuilt curves.
// Variables are packed [L_1..L_m] (EndToEnd) or [L_1..L_m, k_1..k_m] (PerHop).
struct CostModel {
    std::vector<DmtCurve> curves;
    double rho = 0.0;
    double log_rho = 0.0;
    double r = 0.0;
    double mu = 0.0;
    double l_budget = 0.0;
    double k_budget = 0.0;
    ConstraintMode mode = ConstraintMode::PerHop;
    int links = 0;

    static CostModel from_config(const NetworkConfig& config) {
        CostModel m;
        m.curves = link_curves(config);
        m.rho = config.snr_linear;
        m.log_rho = std::log(config.snr_linear);
        m.r = config.multiplexing_gain;
        m.mu = config.mean_interarrival;
        m.l_budget = config.arq_budget;
        m.k_budget = config.deadline_total;
        m.mode = config.constraint_mode;
        m.links = config.num_links();
        return m;
    }

    int dim() const { return mode == ConstraintMode::PerHop ? 2 * links : links; }

    double arq_term(int i, double l) const {
        return exp_guarded(-dmt_eval(curves[static_cast<std::size_t>(i)], r / l) * log_rho);
    }
    double arq_grad(int i, double l) const {
        if (r == 0.0) return 0.0;
        const double v = r / l;
        return (r / (l * l)) * dmt_slope(curves[static_cast<std::size_t>(i)], v) *
               exp_guarded(-dmt_eval(curves[static_cast<std::size_t>(i)], v) * log_rho) *
               log_rho;
    }
    double queue_term(double l, double k) const {
        return (l / mu) * std::exp(-k * (1.0 / l - 1.0 / mu));
    }
    double queue_grad_l(double l, double k) const {
        return (1.0 / mu) * (1.0 + k / l) * std::exp(-k * (1.0 / l - 1.0 / mu));
    }
    double queue_grad_k(double l, double k) const {
        return -(1.0 / l - 1.0 / mu) * queue_term(l, k);
    }

    double value(const std::vector<double>& x) const {
        double total = 0.0;
        if (mode == ConstraintMode::PerHop) {
            for (int i = 0; i < links; ++i)
                total += arq_term(i, x[static_cast<std::size_t>(i)]) +
                         queue_term(x[static_cast<std::size_t>(i)],
                                    x[static_cast<std::size_t>(links + i)]);
        } else {
            double worst = 0.0;
            for (int i = 0; i < links; ++i) {
                const double l = x[static_cast<std::size_t>(i)];
                total += arq_term(i, l);
                worst = std::max(worst, l);
            }
            total += std::exp(-(1.0 / worst - 1.0 / mu) * k_budget);
        }
        return total;
    }

    void gradient(const std::vector<double>& x, std::vector<double>& g) const {
        g.assign(static_cast<std::size_t>(dim()), 0.0);
        if (mode == ConstraintMode::PerHop) {
            for (int i = 0; i < links; ++i) {
                const double l = x[static_cast<std::size_t>(i)];
                const double k = x[static_cast<std::size_t>(links + i)];
                g[static_cast<std::size_t>(i)] = arq_grad(i, l) + queue_grad_l(l, k);
                g[static_cast<std::size_t>(links + i)] = queue_grad_k(l, k);
            }
        } else {
            double worst = 0.0;
            for (int i = 0; i < links; ++i)
                worst = std::max(worst, x[static_cast<std::size_t>(i)]);
            // Subgradient of exp(-theta* k): the bottleneck is the largest
            // L_i; ties share the weight so symmetric points stay symmetric.
            std::vector<int> ties;
            const double tie_tol = 1e-12 * std::max(1.0, worst);
            for (int i = 0; i < links; ++i)
                if (worst - x[static_cast<std::size_t>(i)] <= tie_tol) ties.push_back(i);
            const double tail = std::exp(-(1.0 / worst - 1.0 / mu) * k_budget);
            const double dtail = tail * k_budget / (worst * worst);
            for (int i = 0; i < links; ++i)
                g[static_cast<std::size_t>(i)] = arq_grad(i, x[static_cast<std::size_t>(i)]);
            for (int i : ties)
                g[static_cast<std::size_t>(i)] += dtail / static_cast<double>(ties.size());
        }
    }

    void project(std::vector<double>& x) const {
        std::vector<double> l(x.begin(), x.begin() + links);
        project_box_budget(l, 1.0, mu, l_budget);
        std::copy(l.begin(), l.end(), x.begin());
        if (mode == ConstraintMode::PerHop) {
            std::vector<double> k(x.begin() + links, x.end());
            project_box_budget(k, 0.0, k_budget, k_budget);
            std::copy(k.begin(), k.end(), x.begin() + links);
        }
    }

    double projected_residual(const std::vector<double>& x, const std::vector<double>& g) const {
        std::vector<double> step(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) step[i] = x[i] - g[i];
        project(step);
        double resid = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            resid = std::max(resid, std::abs(x[i] - step[i]));
        return resid;
    }
};

struct PgdOutcome {
    std::vector<double> x;
    double value = std::numeric_limits<double>::infinity();
    double residual = std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;
};

// Projected gradient descent with a Barzilai-Borwein step and Armijo
// backtracking along the projection arc.
template <typename Value, typename Grad, typename Project>
PgdOutcome projected_gradient_descent(std::vector<double> x, const Value& value,
                                      const Grad& grad, const Project& project,
                                      int max_iterations, double tolerance) {
    project(x);
    PgdOutcome out;
    double fx = value(x);
    std::vector<double> g, xn(x.size()), gn, step(x.size());
    grad(x, g);
    double alpha = 1.0;
    std::vector<double> dx(x.size()), dg(x.size());
    bool have_history = false;

    int it = 0;
    for (; it < max_iterations; ++it) {
        for (std::size_t i = 0; i < x.size(); ++i) step[i] = x[i] - g[i];
        project(step);
        double resid = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            resid = std::max(resid, std::abs(x[i] - step[i]));
        out.residual = resid;
        if (resid <= tolerance) {
            out.converged = true;
            break;
        }

        if (have_history) {
            double ss = 0.0, sy = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                ss += dx[i] * dx[i];
                sy += dx[i] * dg[i];
            }
            alpha = (sy > 1e-300) ? ss / sy : alpha * 2.0;
        }
        alpha = std::clamp(alpha, 1e-12, 1e12);

        bool accepted = false;
        double fn = fx;
        for (int ls = 0; ls < 70; ++ls) {
            for (std::size_t i = 0; i < x.size(); ++i) xn[i] = x[i] - alpha * g[i];
            project(xn);
            fn = value(xn);
            double descent = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) descent += g[i] * (xn[i] - x[i]);
            if (fn <= fx + 1e-4 * descent) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;  // no further decrease representable

        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = xn[i] - x[i];
        grad(xn, gn);
        for (std::size_t i = 0; i < x.size(); ++i) dg[i] = gn[i] - g[i];
        have_history = true;
        x.swap(xn);
        g.swap(gn);
        fx = fn;
    }
    out.x = std::move(x);
    out.value = fx;
    out.iterations = it;
    return out;
}

// The objective is a sum of exponentials whose magnitude varies over hundreds
// of orders across instances, so the descent runs on log(cost); the gradient
// of the log is scale-free and the absolute stationarity tolerance keeps its
// meaning on every instance. Reported residuals stay in cost space.
inline PgdOutcome run_pgd(const CostModel& model, std::vector<double> start,
                          const SolverOptions& opts) {
    const auto value_log = [&](const std::vector<double>& x) {
        return std::log(std::max(model.value(x), 1e-300));
    };
    const auto grad_log = [&](const std::vector<double>& x, std::vector<double>& g) {
        model.gradient(x, g);
        const double f = std::max(model.value(x), 1e-300);
        for (double& v : g) v /= f;
    };
    const auto project = [&](std::vector<double>& x) { model.project(x); };

    PgdOutcome out = projected_gradient_descent(std::move(start), value_log, grad_log, project,
                                                opts.max_iterations, opts.gradient_tolerance);
    out.value = model.value(out.x);

    std::vector<double> g;
    model.gradient(out.x, g);
    double f_resid = model.projected_residual(out.x, g);
    if (f_resid > opts.gradient_tolerance) {
        // Large-cost landscapes can leave the cost-space residual above the
        // tolerance even when the log-space one is inside it; polish in cost
        // space from the log-space solution.
        PgdOutcome polish = projected_gradient_descent(
            std::move(out.x), [&](const std::vector<double>& x) { return model.value(x); },
            [&](const std::vector<double>& x, std::vector<double>& gg) {
                model.gradient(x, gg);
            },
            project, opts.max_iterations, opts.gradient_tolerance);
        polish.value = model.value(polish.x);
        model.gradient(polish.x, g);
        f_resid = model.projected_residual(polish.x, g);
        out = std::move(polish);
    }
    out.residual = f_resid;
    out.converged = f_resid <= opts.gradient_tolerance;
    return out;
}

// Lexicographic tie-break on the rounds block keeps reductions deterministic.
inline bool better_solution(double cost_a, const std::vector<double>& xa, double cost_b,
                            const std::vector<double>& xb, int links) {
    const double tie = 1e-12 * std::max({1.0, std::abs(cost_a), std::abs(cost_b)});
    if (cost_a < cost_b - tie) return true;
    if (cost_b < cost_a - tie) return false;
    for (int i = 0; i < links; ++i) {
        const auto q = static_cast<std::size_t>(i);
        if (xa[q] < xb[q] - 1e-12) return true;
        if (xb[q] < xa[q] - 1e-12) return false;
    }
    return false;
}

inline std::vector<double> balanced_start(const CostModel& model) {
    const double m = static_cast<double>(model.links);
    std::vector<double> x(static_cast<std::size_t>(model.dim()));
    for (int i = 0; i < model.links; ++i)
        x[static_cast<std::size_t>(i)] = std::clamp(model.l_budget / m, 1.0, model.mu);
    if (model.mode == ConstraintMode::PerHop)
        for (int i = 0; i < model.links; ++i)
            x[static_cast<std::size_t>(model.links + i)] = model.k_budget / m;
    return x;
}

// Random feasible start: budgets split by Dirichlet(1,..,1) proportions.
// Variates are drawn by inversion so the start points are identical across
// standard libraries.
inline std::vector<double> dirichlet_start(const CostModel& model, std::uint64_t seed,
                                           int index) {
    std::uint64_t state = seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(index + 1));
    std::mt19937_64 engine(splitmix64(state));
    const auto expo = [&engine] {
        const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
        return -std::log1p(-u);
    };
    const int m = model.links;
    std::vector<double> w(static_cast<std::size_t>(m));
    double sum = 0.0;
    for (double& v : w) {
        v = expo() + 1e-12;
        sum += v;
    }
    std::vector<double> x(static_cast<std::size_t>(model.dim()));
    const double slack = std::max(0.0, model.l_budget - m);
    for (int i = 0; i < m; ++i)
        x[static_cast<std::size_t>(i)] =
            std::clamp(1.0 + slack * w[static_cast<std::size_t>(i)] / sum, 1.0, model.mu);
    if (model.mode == ConstraintMode::PerHop) {
        double sum_k = 0.0;
        for (double& v : w) {
            v = expo() + 1e-12;
            sum_k += v;
        }
        for (int i = 0; i < m; ++i)
            x[static_cast<std::size_t>(m + i)] =
                model.k_budget * w[static_cast<std::size_t>(i)] / sum_k;
    }
    model.project(x);
    return x;
}

inline std::vector<std::string> detect_active_constraints(const CostModel& model,
                                                          const std::vector<double>& x) {
    std::vector<std::string> active;
    const double tol_l = 1e-9 * std::max(1.0, model.l_budget);
    double sum_l = 0.0;
    for (int i = 0; i < model.links; ++i) sum_l += x[static_cast<std::size_t>(i)];
    if (sum_l >= model.l_budget - tol_l) active.push_back("sum_L");
    for (int i = 0; i < model.links; ++i) {
        const double l = x[static_cast<std::size_t>(i)];
        if (l <= 1.0 + 1e-9) active.push_back("L" + std::to_string(i + 1) + "=1");
        if (l >= model.mu - 1e-9) active.push_back("L" + std::to_string(i + 1) + "=mu");
    }
    if (model.mode == ConstraintMode::PerHop) {
        const double tol_k = 1e-9 * std::max(1.0, model.k_budget);
        double sum_k = 0.0;
        for (int i = 0; i < model.links; ++i)
            sum_k += x[static_cast<std::size_t>(model.links + i)];
        if (sum_k >= model.k_budget - tol_k) active.push_back("sum_k");
        for (int i = 0; i < model.links; ++i)
            if (x[static_cast<std::size_t>(model.links + i)] <= 1e-9)
                active.push_back("k" + std::to_string(i + 1) + "=0");
    }
    return active;
}

inline Allocation unpack_allocation(const CostModel& model, const std::vector<double>& x) {
    Allocation alloc;
    alloc.rounds.assign(x.begin(), x.begin() + model.links);
    if (model.mode == ConstraintMode::PerHop)
        alloc.deadlines = std::vector<double>(x.begin() + model.links, x.end());
    return alloc;
}

inline bool in_convexity_region_of(const CostModel& model, const std::vector<double>& x) {
    for (int i = 0; i < model.links; ++i) {
        const double l = x[static_cast<std::size_t>(i)];
        const double k = x[static_cast<std::size_t>(model.links + i)];
        if (l >= model.mu) return false;
        if (!(k > l / (2.0 * (model.mu / l - 1.0)))) return false;
    }
    return true;
}

inline void check_solver_feasibility(const NetworkConfig& config) {
    if (config.arq_budget < static_cast<double>(config.num_nodes - 1))
        throw infeasible_error("ARQ budget below one round per link");
    if (config.mean_interarrival < 1.0)
        throw infeasible_error("mean interarrival below 1 leaves no stable service window");
    if (!(config.deadline_total > 0.0)) throw infeasible_error("deadline budget must be positive");
    config.validate();
}

inline std::vector<double> grid_values(double lo, double hi, double step) {
    std::vector<double> values;
    for (std::size_t j = 0;; ++j) {
        const double v = lo + static_cast<double>(j) * step;
        if (v > hi + 1e-9) break;
        values.push_back(std::min(v, hi));
    }
    if (values.size() >= 2 && values[values.size() - 1] == values[values.size() - 2])
        values.pop_back();
    return values;
}

// Best point of a coarse rounds grid (balanced deadline split), used as one
// extra multistart seed so the descent lands in the global basin even when a
// DMT kink splits the landscape.
inline std::vector<double> coarse_grid_start(const CostModel& model, double step) {
    const auto l_values = grid_values(1.0, std::min(model.mu, model.l_budget), step);
    if (l_values.empty() || l_values.size() > 256) return {};
    std::vector<double> best;
    double best_cost = std::numeric_limits<double>::infinity();
    std::vector<double> x(static_cast<std::size_t>(model.dim()));
    if (model.mode == ConstraintMode::PerHop)
        for (int i = 0; i < model.links; ++i)
            x[static_cast<std::size_t>(model.links + i)] =
                model.k_budget / static_cast<double>(model.links);

    std::function<void(int, double)> enum_l = [&](int link, double used) {
        if (link == model.links) {
            const double cost = model.value(x);
            if (cost < best_cost) {
                best_cost = cost;
                best = x;
            }
            return;
        }
        for (double l : l_values) {
            if (used + l > model.l_budget + 1e-9) break;
            x[static_cast<std::size_t>(link)] = l;
            enum_l(link + 1, used + l);
        }
    };
    enum_l(0, 0.0);
    return best;
}

inline SolveResult finish_result(const CostModel& model, const NetworkConfig& config,
                                 const PgdOutcome& outcome) {
    SolveResult result;
    result.allocation = unpack_allocation(model, outcome.x);
    result.cost = model.mode == ConstraintMode::PerHop
                      ? total_cost_per_hop(config, result.allocation)
                      : total_cost_e2e(config, result.allocation);
    result.kkt_residual = outcome.residual;
    result.converged = outcome.converged;
    result.active_constraints = detect_active_constraints(model, outcome.x);
    if (model.mode == ConstraintMode::PerHop)
        result.in_convex_region = in_convexity_region_of(model, outcome.x);
    return result;
}

inline PgdOutcome multistart_solve(const CostModel& model, const SolverOptions& opts) {
    std::vector<std::vector<double>> starts;
    starts.push_back(balanced_start(model));
    if (model.links <= 3) {
        auto seeded = coarse_grid_start(model, opts.oracle_grid_step);
        if (!seeded.empty()) starts.push_back(std::move(seeded));
    }
    for (int s = 0; s < opts.multistart_count; ++s)
        starts.push_back(dirichlet_start(model, opts.seed, s));

    PgdOutcome best;
    bool first = true;
    for (auto& start : starts) {
        PgdOutcome candidate = run_pgd(model, std::move(start), opts);
        if (first || better_solution(candidate.value, candidate.x, best.value, best.x,
                                     model.links)) {
            best = std::move(candidate);
            first = false;
        }
    }
    return best;
}

// Exhaustive integer neighborhood of the continuous rounds, re-optimizing the
// deadlines for each candidate. Deadlines stay continuous.
inline void refine_to_integer_rounds(const CostModel& model, const NetworkConfig& config,
                                     const SolverOptions& opts, SolveResult& result) {
    const int m = model.links;
    std::vector<std::vector<double>> choices(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const double l = result.allocation.rounds[static_cast<std::size_t>(i)];
        const double lo = std::floor(l);
        const double hi = std::ceil(l);
        auto& c = choices[static_cast<std::size_t>(i)];
        if (lo >= 1.0 && lo <= model.mu) c.push_back(lo);
        if (hi != lo && hi >= 1.0 && hi <= model.mu) c.push_back(hi);
        if (c.empty()) return;  // no admissible integer neighbor on this link
    }

    std::vector<double> rounds(static_cast<std::size_t>(m));
    std::vector<double> best_x;
    double best_cost = std::numeric_limits<double>::infinity();
    bool found = false;

    std::function<void(int)> enumerate = [&](int link) {
        if (link == m) {
            double sum = 0.0;
            for (double v : rounds) sum += v;
            if (sum > model.l_budget + 1e-9) return;
            std::vector<double> x(rounds);
            double cost;
            if (model.mode == ConstraintMode::PerHop) {
                std::vector<double> k(result.allocation.deadlines->begin(),
                                      result.allocation.deadlines->end());
                auto value = [&](const std::vector<double>& kv) {
                    double total = 0.0;
                    for (int i = 0; i < m; ++i)
                        total += model.arq_term(i, rounds[static_cast<std::size_t>(i)]) +
                                 model.queue_term(rounds[static_cast<std::size_t>(i)],
                                                  kv[static_cast<std::size_t>(i)]);
                    return total;
                };
                auto value_log = [&](const std::vector<double>& kv) {
                    return std::log(std::max(value(kv), 1e-300));
                };
                auto grad_log = [&](const std::vector<double>& kv, std::vector<double>& g) {
                    g.assign(kv.size(), 0.0);
                    const double f = std::max(value(kv), 1e-300);
                    for (int i = 0; i < m; ++i)
                        g[static_cast<std::size_t>(i)] =
                            model.queue_grad_k(rounds[static_cast<std::size_t>(i)],
                                               kv[static_cast<std::size_t>(i)]) /
                            f;
                };
                auto project = [&](std::vector<double>& kv) {
                    project_box_budget(kv, 0.0, model.k_budget, model.k_budget);
                };
                auto sub = projected_gradient_descent(std::move(k), value_log, grad_log,
                                                      project, opts.max_iterations,
                                                      opts.gradient_tolerance);
                cost = value(sub.x);
                x.insert(x.end(), sub.x.begin(), sub.x.end());
            } else {
                cost = model.value(x);
            }
            if (!found || better_solution(cost, x, best_cost, best_x, m)) {
                best_cost = cost;
                best_x = std::move(x);
                found = true;
            }
            return;
        }
        for (double v : choices[static_cast<std::size_t>(link)]) {
            rounds[static_cast<std::size_t>(link)] = v;
            enumerate(link + 1);
        }
    };
    enumerate(0);
    if (!found) return;

    result.continuous_allocation = result.allocation;
    result.continuous_cost = result.cost.total;
    result.allocation = unpack_allocation(model, best_x);
    result.cost = model.mode == ConstraintMode::PerHop
                      ? total_cost_per_hop(config, result.allocation)
                      : total_cost_e2e(config, result.allocation);
    result.active_constraints = detect_active_constraints(model, best_x);
    if (model.mode == ConstraintMode::PerHop)
        result.in_convex_region = in_convexity_region_of(model, best_x);
}

}  // namespace detail

/// Minimizes the per-hop cost over set A (rounds and deadlines) by multistart
/// projected gradient descent; optionally refines the rounds to integers.
inline SolveResult solve_per_hop(const NetworkConfig& config, const SolverOptions& opts = {}) {
    detail::check_solver_feasibility(config);
    opts.validate();
    if (config.constraint_mode != ConstraintMode::PerHop)
        throw std::invalid_argument("config is not in per-hop constraint mode");
    const auto model = detail::CostModel::from_config(config);
    const auto outcome = detail::multistart_solve(model, opts);
    SolveResult result = detail::finish_result(model, config, outcome);
    if (opts.integer_refinement) detail::refine_to_integer_rounds(model, config, opts, result);
    return result;
}

/// Minimizes the end-to-end cost over set B (rounds only). The non-smooth
/// e^{-theta* k} term enters through its epigraph subgradient: bottleneck
/// links share the tail derivative.
inline SolveResult solve_e2e(const NetworkConfig& config, const SolverOptions& opts = {}) {
    detail::check_solver_feasibility(config);
    opts.validate();
    if (config.constraint_mode != ConstraintMode::EndToEnd)
        throw std::invalid_argument("config is not in end-to-end constraint mode");
    const auto model = detail::CostModel::from_config(config);
    const auto outcome = detail::multistart_solve(model, opts);
    SolveResult result = detail::finish_result(model, config, outcome);
    if (opts.integer_refinement) detail::refine_to_integer_rounds(model, config, opts, result);
    return result;
}

inline SolveResult solve(const NetworkConfig& config, const SolverOptions& opts = {}) {
    return config.constraint_mode == ConstraintMode::PerHop ? solve_per_hop(config, opts)
                                                            : solve_e2e(config, opts);
}

/// Infinity norm of the projected-gradient stationarity measure at a feasible
/// allocation: ||x - P(x - grad f(x))||_inf over set A or B.
inline double kkt_residual(const NetworkConfig& config, const Allocation& alloc) {
    config.validate();
    const auto model = detail::CostModel::from_config(config);
    const int m = model.links;
    if (static_cast<int>(alloc.rounds.size()) != m)
        throw std::invalid_argument("allocation must have one rounds entry per link");
    double sum_l = 0.0;
    for (double l : alloc.rounds) {
        if (l < 1.0 - 1e-9 || l > model.mu + 1e-9)
            throw std::invalid_argument("rounds outside [1, mu]");
        sum_l += l;
    }
    if (sum_l > model.l_budget + 1e-9) throw std::invalid_argument("rounds exceed the budget");

    std::vector<double> x(alloc.rounds);
    if (model.mode == ConstraintMode::PerHop) {
        if (!alloc.deadlines || static_cast<int>(alloc.deadlines->size()) != m)
            throw std::invalid_argument("per-hop allocation requires deadlines");
        double sum_k = 0.0;
        for (double k : *alloc.deadlines) {
            if (k < -1e-12) throw std::invalid_argument("deadlines must be nonnegative");
            sum_k += k;
        }
        if (sum_k > model.k_budget + 1e-9)
            throw std::invalid_argument("deadlines exceed the budget");
        x.insert(x.end(), alloc.deadlines->begin(), alloc.deadlines->end());
    }
    std::vector<double> g;
    model.gradient(x, g);
    return model.projected_residual(x, g);
}

/// Exhaustive certification oracle on the feasible grid; exact up to the grid
/// resolution. Supported for N <= 4. Deadline splits use the fact that every
/// queue tail is decreasing in k_i, so for a fixed prefix the largest grid
/// value dominates all smaller ones; the reduction is exact on the grid.
inline SolveResult grid_oracle(const NetworkConfig& config, double step) {
    detail::check_solver_feasibility(config);
    if (!(step > 0.0)) throw std::invalid_argument("grid step must be positive");
    if (config.num_nodes > 4)
        throw unsupported_size_error("grid oracle supports at most 4 nodes");
    const auto model = detail::CostModel::from_config(config);
    const int m = model.links;

    const auto l_values = detail::grid_values(1.0, std::min(model.mu, model.l_budget), step);
    if (l_values.empty()) throw infeasible_error("no feasible rounds on the grid");

    std::vector<std::vector<double>> arq(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        arq[static_cast<std::size_t>(i)].reserve(l_values.size());
        for (double l : l_values)
            arq[static_cast<std::size_t>(i)].push_back(model.arq_term(i, l));
    }

    std::vector<double> best_x;
    double best_cost = std::numeric_limits<double>::infinity();
    bool found = false;
    const auto consider = [&](double cost, const std::vector<double>& x) {
        if (!found || detail::better_solution(cost, x, best_cost, best_x, m)) {
            best_cost = cost;
            best_x = x;
            found = true;
        }
    };

    if (model.mode == ConstraintMode::EndToEnd) {
        std::vector<double> x(static_cast<std::size_t>(m));
        std::function<void(int, double, double)> enumerate = [&](int link, double used,
                                                                 double arq_sum) {
            if (link == m) {
                double worst = 0.0;
                for (double l : x) worst = std::max(worst, l);
                const double cost =
                    arq_sum + std::exp(-(1.0 / worst - 1.0 / model.mu) * model.k_budget);
                consider(cost, x);
                return;
            }
            for (std::size_t j = 0; j < l_values.size(); ++j) {
                const double l = l_values[j];
                if (used + l > model.l_budget + 1e-9) break;
                x[static_cast<std::size_t>(link)] = l;
                enumerate(link + 1, used + l, arq_sum + arq[static_cast<std::size_t>(link)][j]);
            }
        };
        enumerate(0, 0.0, 0.0);
    } else {
        const auto k_values = detail::grid_values(step, model.k_budget, step);
        if (k_values.empty()) throw infeasible_error("no feasible deadlines on the grid");
        std::vector<std::vector<std::vector<double>>> queue(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) {
            auto& tbl = queue[static_cast<std::size_t>(i)];
            tbl.resize(l_values.size());
            for (std::size_t lj = 0; lj < l_values.size(); ++lj) {
                tbl[lj].reserve(k_values.size());
                for (double k : k_values) tbl[lj].push_back(model.queue_term(l_values[lj], k));
            }
        }
        const auto largest_k_index = [&](double remaining) -> std::ptrdiff_t {
            const auto cnt =
                static_cast<std::ptrdiff_t>(std::floor(remaining / step + 1e-9)) - 1;
            return std::min<std::ptrdiff_t>(cnt,
                                            static_cast<std::ptrdiff_t>(k_values.size()) - 1);
        };

        std::vector<double> x(static_cast<std::size_t>(2 * m));
        std::vector<std::size_t> l_idx(static_cast<std::size_t>(m));
        std::function<void(int, double)> enum_l = [&](int link, double used) {
            if (link == m) {
                std::function<void(int, double, double)> enum_k = [&](int kl, double kused,
                                                                      double qsum) {
                    if (kl == m - 1) {
                        const auto last = largest_k_index(model.k_budget - kused);
                        if (last < 0) return;
                        x[static_cast<std::size_t>(m + kl)] =
                            k_values[static_cast<std::size_t>(last)];
                        double arq_sum = 0.0;
                        for (int i = 0; i < m; ++i)
                            arq_sum += arq[static_cast<std::size_t>(i)]
                                          [l_idx[static_cast<std::size_t>(i)]];
                        const double cost = arq_sum + qsum +
                                            queue[static_cast<std::size_t>(kl)]
                                                 [l_idx[static_cast<std::size_t>(kl)]]
                                                 [static_cast<std::size_t>(last)];
                        consider(cost, x);
                        return;
                    }
                    for (std::size_t kj = 0; kj < k_values.size(); ++kj) {
                        const double k = k_values[kj];
                        if (kused + k + step > model.k_budget + 1e-9) break;
                        x[static_cast<std::size_t>(m + kl)] = k;
                        enum_k(kl + 1, kused + k,
                               qsum + queue[static_cast<std::size_t>(kl)]
                                           [l_idx[static_cast<std::size_t>(kl)]][kj]);
                    }
                };
                enum_k(0, 0.0, 0.0);
                return;
            }
            for (std::size_t j = 0; j < l_values.size(); ++j) {
                const double l = l_values[j];
                if (used + l > model.l_budget + 1e-9) break;
                x[static_cast<std::size_t>(link)] = l;
                l_idx[static_cast<std::size_t>(link)] = j;
                enum_l(link + 1, used + l);
            }
        };
        enum_l(0, 0.0);
    }

    if (!found) throw infeasible_error("grid enumeration found no feasible point");
    SolveResult result;
    result.allocation = detail::unpack_allocation(model, best_x);
    result.cost = model.mode == ConstraintMode::PerHop
                      ? total_cost_per_hop(config, result.allocation)
                      : total_cost_e2e(config, result.allocation);
    result.kkt_residual = kkt_residual(config, result.allocation);
    result.converged = true;
    result.active_constraints = detail::detect_active_constraints(model, best_x);
    if (model.mode == ConstraintMode::PerHop)
        result.in_convex_region = detail::in_convexity_region_of(model, best_x);
    return result;
}

}  // namespace arq
