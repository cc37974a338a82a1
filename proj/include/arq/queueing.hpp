#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "arq/dmt.hpp"
#include "arq/network.hpp"

namespace arq {

/// Decision variables of the allocation problem: per-link ARQ rounds (also the
/// mean service times, in channel-block units) plus per-link deadlines when
/// the per-hop constraint is active.
struct Allocation {
    std::vector<double> rounds;                     // L_1 .. L_{N-1}
    std::optional<std::vector<double>> deadlines;   // k_1 .. k_{N-1}, PerHop only
};

namespace detail {

// Exponentials that may underflow keep their exact natural log next to the
// (possibly flushed-to-zero) linear value.
inline constexpr double kExpUnderflowLog = -700.0;

inline double exp_guarded(double log_value) {
    if (log_value < kExpUnderflowLog) return 0.0;
    return std::exp(log_value);
}

inline void check_service_interval(double rounds, double mu) {
    if (rounds < 1.0) throw std::invalid_argument("ARQ rounds must be at least 1");
    if (rounds > mu) throw std::domain_error("unstable queue: rounds exceed mean interarrival");
}

}  // namespace detail

/// Per-link and aggregate error terms. Terms below exp(-700) flush to zero in
/// the linear fields; the log fields always carry the exact exponent.
struct CostBreakdown {
    std::vector<double> arq_terms;        // rho^{-f_i(r/L_i)}
    std::vector<double> queue_terms;      // per-link tails, or one e^{-theta* k}
    std::vector<double> log_arq_terms;    // natural logs of the above
    std::vector<double> log_queue_terms;
    double total = 0.0;
};

/// Stationary probability that the delay at one M/M/1 node exceeds its
/// deadline: (L/mu) e^{-k (1/L - 1/mu)}.
inline double per_hop_tail(double rounds, double mu, double deadline) {
    detail::check_service_interval(rounds, mu);
    if (deadline < 0.0) throw std::invalid_argument("deadline must be nonnegative");
    return (rounds / mu) * std::exp(-deadline * (1.0 / rounds - 1.0 / mu));
}

/// Large-deviation decay rate of the end-to-end delay tail:
/// min over links of (1/L_i - 1/mu). Zero iff some link sits at L_i = mu.
inline double e2e_decay_rate(const std::vector<double>& rounds, double mu) {
    if (rounds.empty()) throw std::invalid_argument("rounds must be nonempty");
    double rate = std::numeric_limits<double>::infinity();
    for (double li : rounds) {
        detail::check_service_interval(li, mu);
        rate = std::min(rate, 1.0 / li - 1.0 / mu);
    }
    return rate;
}

/// Asymptotic end-to-end delay violation probability e^{-theta* k}.
inline double e2e_tail(const std::vector<double>& rounds, double mu, double deadline) {
    if (deadline < 0.0) throw std::invalid_argument("deadline must be nonnegative");
    return std::exp(-e2e_decay_rate(rounds, mu) * deadline);
}

/// Total error cost under per-hop deadlines: every link contributes its ARQ
/// outage term plus its queueing tail.
inline CostBreakdown total_cost_per_hop(const NetworkConfig& config, const Allocation& alloc) {
    const auto curves = link_curves(config);
    const std::size_t links = curves.size();
    if (alloc.rounds.size() != links)
        throw std::invalid_argument("allocation must have one rounds entry per link");
    if (!alloc.deadlines || alloc.deadlines->size() != links)
        throw std::invalid_argument("per-hop cost requires one deadline per link");

    const double log_rho = std::log(config.snr_linear);
    const double mu = config.mean_interarrival;
    CostBreakdown out;
    out.arq_terms.resize(links);
    out.queue_terms.resize(links);
    out.log_arq_terms.resize(links);
    out.log_queue_terms.resize(links);
    for (std::size_t i = 0; i < links; ++i) {
        const double li = alloc.rounds[i];
        const double ki = (*alloc.deadlines)[i];
        detail::check_service_interval(li, mu);
        if (ki < 0.0) throw std::invalid_argument("deadlines must be nonnegative");
        const double log_arq = -dmt_eval(curves[i], config.multiplexing_gain / li) * log_rho;
        const double log_queue = std::log(li / mu) - ki * (1.0 / li - 1.0 / mu);
        out.log_arq_terms[i] = log_arq;
        out.log_queue_terms[i] = log_queue;
        out.arq_terms[i] = detail::exp_guarded(log_arq);
        out.queue_terms[i] = detail::exp_guarded(log_queue);
        out.total += out.arq_terms[i] + out.queue_terms[i];
    }
    return out;
}

/// Total error cost under a single end-to-end deadline: ARQ terms plus one
/// e^{-theta* k} tail term.
inline CostBreakdown total_cost_e2e(const NetworkConfig& config, const Allocation& alloc) {
    const auto curves = link_curves(config);
    const std::size_t links = curves.size();
    if (alloc.rounds.size() != links)
        throw std::invalid_argument("allocation must have one rounds entry per link");

    const double log_rho = std::log(config.snr_linear);
    const double mu = config.mean_interarrival;
    CostBreakdown out;
    out.arq_terms.resize(links);
    out.log_arq_terms.resize(links);
    for (std::size_t i = 0; i < links; ++i) {
        const double li = alloc.rounds[i];
        detail::check_service_interval(li, mu);
        const double log_arq = -dmt_eval(curves[i], config.multiplexing_gain / li) * log_rho;
        out.log_arq_terms[i] = log_arq;
        out.arq_terms[i] = detail::exp_guarded(log_arq);
        out.total += out.arq_terms[i];
    }
    const double log_queue = -e2e_decay_rate(alloc.rounds, mu) * config.deadline_total;
    out.log_queue_terms.push_back(log_queue);
    out.queue_terms.push_back(detail::exp_guarded(log_queue));
    out.total += out.queue_terms.front();
    return out;
}

/// True iff every link satisfies k_i > L_i / (2 (mu/L_i - 1)), the region in
/// which the per-hop cost is jointly convex. The boundary itself is excluded.
inline bool convexity_region_check(const Allocation& alloc, double mu) {
    if (!alloc.deadlines || alloc.deadlines->size() != alloc.rounds.size())
        throw std::invalid_argument("convexity region check requires per-hop deadlines");
    for (std::size_t i = 0; i < alloc.rounds.size(); ++i) {
        const double li = alloc.rounds[i];
        if (li < 1.0) throw std::invalid_argument("ARQ rounds must be at least 1");
        if (li >= mu) throw std::domain_error("convexity threshold undefined at L = mu");
        const double threshold = li / (2.0 * (mu / li - 1.0));
        if (!((*alloc.deadlines)[i] > threshold)) return false;
    }
    return true;
}

/// d/dL of the ARQ outage term rho^{-f(r/L)}; nonpositive since f' <= 0.
inline double marginal_cost_arq(const DmtCurve& curve, double rho, double r, double rounds) {
    if (!(rho > 1.0)) throw std::invalid_argument("rho must exceed 1");
    if (rounds < 1.0) throw std::invalid_argument("ARQ rounds must be at least 1");
    if (r < 0.0) throw std::invalid_argument("multiplexing gain must be nonnegative");
    if (r == 0.0) return 0.0;
    const double v = r / rounds;
    const double log_rho = std::log(rho);
    return (r / (rounds * rounds)) * dmt_slope(curve, v) *
           detail::exp_guarded(-dmt_eval(curve, v) * log_rho) * log_rho;
}

/// d/dL of the per-hop queueing tail; positive.
inline double marginal_cost_queue(double rounds, double mu, double deadline) {
    detail::check_service_interval(rounds, mu);
    if (deadline < 0.0) throw std::invalid_argument("deadline must be nonnegative");
    return (1.0 / mu) * (1.0 + deadline / rounds) *
           std::exp(-deadline * (1.0 / rounds - 1.0 / mu));
}

/// Interior-optimum tests at the two ends of [1, mu]. Condition (i): at L = 1
/// the queueing marginal is still smaller than the ARQ improvement. Condition
/// (ii): at L = mu the queueing marginal dominates. Both true predicts an
/// equalizing optimum strictly inside (1, mu).
inline std::pair<bool, bool> interior_conditions(const DmtCurve& curve, double rho, double r,
                                                 double mu, double deadline) {
    const bool cond_lower =
        marginal_cost_queue(1.0, mu, deadline) < -marginal_cost_arq(curve, rho, r, 1.0);
    const bool cond_upper =
        marginal_cost_queue(mu, mu, deadline) > -marginal_cost_arq(curve, rho, r, mu);
    return {cond_lower, cond_upper};
}

}  // namespace arq
