#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "arq/network.hpp"
#include "arq/rng.hpp"

namespace arq {

/// One Monte-Carlo run of the relay tandem. `rounds` are the mean service
/// times (ARQ windows) of the transmitting nodes 1..N-1.
struct SimulationPlan {
    NetworkConfig config;
    std::vector<double> rounds;
    std::int64_t num_packets = 1'000'000;
    std::int64_t warmup_packets = 10'000;
    std::uint64_t seed = 1;
    std::vector<double> tail_grid;

    // Optional empirical-loss mode: packets whose sojourn at queue q exceeds
    // drop_deadlines[q] are flagged and stop propagating downstream. Excluded
    // from the analytic-agreement tests.
    bool drop_on_deadline = false;
    std::optional<std::vector<double>> drop_deadlines;

    void validate() const {
        config.validate();
        if (static_cast<int>(rounds.size()) != config.num_links())
            throw std::invalid_argument("rounds must have one entry per link");
        for (double li : rounds) {
            if (!(li > 0.0)) throw std::invalid_argument("service means must be positive");
            if (li > config.mean_interarrival)
                throw std::domain_error("unstable plan: service mean exceeds mean interarrival");
        }
        if (warmup_packets < 0) throw std::invalid_argument("warmup_packets must be nonnegative");
        if (num_packets <= warmup_packets)
            throw std::invalid_argument("num_packets must exceed warmup_packets");
    }
};

/// Post-warmup samples. Matrices are indexed [queue][packet]; queue counts
/// differ by duplex mode (N-1 transmitting nodes for full duplex, N-2 tracked
/// nodes for half duplex). In drop mode, entries at nodes a dropped packet
/// never reached are NaN and dropped_at records the 1-based drop node.
struct DelaySampleSet {
    std::vector<std::vector<double>> per_node_waiting;
    std::vector<std::vector<double>> per_node_sojourn;
    std::vector<double> end_to_end_delay;
    std::vector<double> source_interarrival;  // raw interarrival draws
    std::vector<double> source_arrival_time;  // absolute arrival times at the source
    std::vector<std::int32_t> dropped_at;     // empty unless drop mode; -1 = delivered
    std::uint64_t seed_used = 0;

    int num_queues() const { return static_cast<int>(per_node_waiting.size()); }
    std::int64_t num_samples() const {
        return static_cast<std::int64_t>(end_to_end_delay.size());
    }
};

struct TailEstimate {
    double k = 0.0;
    double probability = 0.0;
    double half_width_95 = 0.0;    // binomial normal approximation
    double standard_error = 0.0;   // batch-means; accounts for autocorrelation
    std::int64_t sample_count = 0;
};

enum class TailKind { PerNodeWaiting, PerNodeSojourn, EndToEnd };

namespace detail {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct SampleRecorder {
    std::int64_t warmup;
    std::int64_t keep;
    DelaySampleSet out;

    SampleRecorder(const SimulationPlan& plan, int queues) {
        warmup = plan.warmup_packets;
        keep = plan.num_packets - plan.warmup_packets;
        out.seed_used = plan.seed;
        out.per_node_waiting.assign(static_cast<std::size_t>(queues), {});
        out.per_node_sojourn.assign(static_cast<std::size_t>(queues), {});
        for (auto& v : out.per_node_waiting) v.reserve(static_cast<std::size_t>(keep));
        for (auto& v : out.per_node_sojourn) v.reserve(static_cast<std::size_t>(keep));
        out.end_to_end_delay.reserve(static_cast<std::size_t>(keep));
        out.source_interarrival.reserve(static_cast<std::size_t>(keep));
        out.source_arrival_time.reserve(static_cast<std::size_t>(keep));
        if (plan.drop_on_deadline) out.dropped_at.reserve(static_cast<std::size_t>(keep));
    }

    bool keeps(std::int64_t n) const { return n >= warmup; }
};

}  // namespace detail

/// Full-duplex tandem: every transmitting node is an M/M/1 queue driven by
/// its own service, W_n = (W_{n-1} + S_{n-1} - A_n)^+, and the departures of
/// node i are the arrivals of node i+1.
inline DelaySampleSet simulate_full_duplex(const SimulationPlan& plan) {
    plan.validate();
    if (plan.config.duplex != Duplex::FullDuplex)
        throw std::invalid_argument("plan is not configured for full duplex");
    const int queues = plan.config.num_links();
    if (plan.drop_on_deadline &&
        (!plan.drop_deadlines || static_cast<int>(plan.drop_deadlines->size()) != queues))
        throw std::invalid_argument("drop mode requires one deadline per queue");

    const double mu = plan.config.mean_interarrival;
    RandomStream arrivals(plan.seed, 0, VariateClass::Arrival);
    std::vector<RandomStream> services;
    services.reserve(static_cast<std::size_t>(queues));
    for (int i = 0; i < queues; ++i)
        services.emplace_back(plan.seed, i + 1, VariateClass::Service);

    detail::SampleRecorder rec(plan, queues);
    std::vector<double> prev_wait(static_cast<std::size_t>(queues), 0.0);
    std::vector<double> prev_service(static_cast<std::size_t>(queues), 0.0);
    std::vector<double> prev_sojourn(static_cast<std::size_t>(queues), 0.0);
    std::vector<double> service_draw(static_cast<std::size_t>(queues), 0.0);

    // Drop-mode bookkeeping works in absolute time so that arrival gaps skip
    // removed packets.
    std::vector<double> last_arrival(static_cast<std::size_t>(queues), 0.0);
    std::vector<char> seen(static_cast<std::size_t>(queues), 0);

    double clock = 0.0;
    for (std::int64_t n = 0; n < plan.num_packets; ++n) {
        const double a = arrivals.exponential(mu);
        clock += a;
        for (int i = 0; i < queues; ++i)
            service_draw[static_cast<std::size_t>(i)] =
                services[static_cast<std::size_t>(i)].exponential(
                    plan.rounds[static_cast<std::size_t>(i)]);

        const bool record = rec.keeps(n);
        if (record) {
            rec.out.source_interarrival.push_back(a);
            rec.out.source_arrival_time.push_back(clock);
        }

        if (!plan.drop_on_deadline) {
            double gap = a;
            double e2e = 0.0;
            for (int i = 0; i < queues; ++i) {
                const auto q = static_cast<std::size_t>(i);
                const double wait =
                    (n == 0) ? 0.0 : std::max(0.0, prev_wait[q] + prev_service[q] - gap);
                const double sojourn = wait + service_draw[q];
                if (n > 0) gap = gap + sojourn - prev_sojourn[q];
                prev_wait[q] = wait;
                prev_service[q] = service_draw[q];
                prev_sojourn[q] = sojourn;
                e2e += sojourn;
                if (record) {
                    rec.out.per_node_waiting[q].push_back(wait);
                    rec.out.per_node_sojourn[q].push_back(sojourn);
                }
            }
            if (record) rec.out.end_to_end_delay.push_back(e2e);
        } else {
            double arrival_time = clock;
            double e2e = 0.0;
            std::int32_t drop_node = -1;
            for (int i = 0; i < queues; ++i) {
                const auto q = static_cast<std::size_t>(i);
                if (drop_node >= 0) {
                    if (record) {
                        rec.out.per_node_waiting[q].push_back(detail::kNaN);
                        rec.out.per_node_sojourn[q].push_back(detail::kNaN);
                    }
                    continue;
                }
                const double wait =
                    !seen[q] ? 0.0
                             : std::max(0.0, prev_wait[q] + prev_service[q] -
                                                 (arrival_time - last_arrival[q]));
                const double sojourn = wait + service_draw[q];
                prev_wait[q] = wait;
                prev_service[q] = service_draw[q];
                last_arrival[q] = arrival_time;
                seen[q] = 1;
                e2e += sojourn;
                if (record) {
                    rec.out.per_node_waiting[q].push_back(wait);
                    rec.out.per_node_sojourn[q].push_back(sojourn);
                }
                if (sojourn > (*plan.drop_deadlines)[q]) {
                    drop_node = i + 1;
                    continue;
                }
                arrival_time += sojourn;
            }
            if (record) {
                rec.out.end_to_end_delay.push_back(drop_node >= 0 ? detail::kNaN : e2e);
                rec.out.dropped_at.push_back(drop_node);
            }
        }
    }
    return std::move(rec.out);
}

/// Half-duplex tandem per the coupled recursions: the source waits on its own
/// and the first relay's previous services, W_n^1 = (W_{n-1}^1 + S_{n-1}^1 +
/// S_{n-1}^2 - A_n^1)^+, and interior node i waits on the next node's
/// service, W_n^i = (W_{n-1}^i + S_{n-1}^{i+1} - A_n^i)^+. Tracked queues are
/// 1..N-2 and the end-to-end delay sums their sojourns.
inline DelaySampleSet simulate_half_duplex(const SimulationPlan& plan) {
    plan.validate();
    if (plan.config.duplex != Duplex::HalfDuplex)
        throw std::invalid_argument("plan is not configured for half duplex");
    if (plan.config.num_nodes < 3)
        throw std::invalid_argument("half-duplex coupling needs at least one relay");
    const int queues = plan.config.num_nodes - 2;
    const int streams = plan.config.num_links();  // service streams 1..N-1
    if (plan.rounds[0] + plan.rounds[1] > plan.config.mean_interarrival)
        throw std::domain_error(
            "unstable plan: source queue needs rounds[0] + rounds[1] <= mean interarrival");
    if (plan.drop_on_deadline &&
        (!plan.drop_deadlines || static_cast<int>(plan.drop_deadlines->size()) != queues))
        throw std::invalid_argument("drop mode requires one deadline per queue");

    const double mu = plan.config.mean_interarrival;
    RandomStream arrivals(plan.seed, 0, VariateClass::Arrival);
    std::vector<RandomStream> services;
    services.reserve(static_cast<std::size_t>(streams));
    for (int i = 0; i < streams; ++i)
        services.emplace_back(plan.seed, i + 1, VariateClass::Service);

    detail::SampleRecorder rec(plan, queues);
    std::vector<double> prev_wait(static_cast<std::size_t>(queues), 0.0);
    std::vector<double> prev_sojourn(static_cast<std::size_t>(queues), 0.0);
    std::vector<double> prev_service(static_cast<std::size_t>(streams), 0.0);
    std::vector<double> service_draw(static_cast<std::size_t>(streams), 0.0);
    std::vector<double> last_arrival(static_cast<std::size_t>(queues), 0.0);
    std::vector<char> seen(static_cast<std::size_t>(queues), 0);

    double clock = 0.0;
    for (std::int64_t n = 0; n < plan.num_packets; ++n) {
        const double a = arrivals.exponential(mu);
        clock += a;
        for (int i = 0; i < streams; ++i)
            service_draw[static_cast<std::size_t>(i)] =
                services[static_cast<std::size_t>(i)].exponential(
                    plan.rounds[static_cast<std::size_t>(i)]);

        const bool record = rec.keeps(n);
        if (record) {
            rec.out.source_interarrival.push_back(a);
            rec.out.source_arrival_time.push_back(clock);
        }

        if (!plan.drop_on_deadline) {
            double gap = a;
            double e2e = 0.0;
            for (int i = 0; i < queues; ++i) {
                const auto q = static_cast<std::size_t>(i);
                double wait = 0.0;
                if (n > 0) {
                    const double carried = (i == 0) ? prev_service[0] + prev_service[1]
                                                    : prev_service[q + 1];
                    wait = std::max(0.0, prev_wait[q] + carried - gap);
                }
                const double sojourn = wait + service_draw[q];
                if (n > 0) gap = gap + sojourn - prev_sojourn[q];
                prev_wait[q] = wait;
                prev_sojourn[q] = sojourn;
                e2e += sojourn;
                if (record) {
                    rec.out.per_node_waiting[q].push_back(wait);
                    rec.out.per_node_sojourn[q].push_back(sojourn);
                }
            }
            if (record) rec.out.end_to_end_delay.push_back(e2e);
        } else {
            double arrival_time = clock;
            double e2e = 0.0;
            std::int32_t drop_node = -1;
            for (int i = 0; i < queues; ++i) {
                const auto q = static_cast<std::size_t>(i);
                if (drop_node >= 0) {
                    if (record) {
                        rec.out.per_node_waiting[q].push_back(detail::kNaN);
                        rec.out.per_node_sojourn[q].push_back(detail::kNaN);
                    }
                    continue;
                }
                double wait = 0.0;
                if (seen[q]) {
                    const double carried = (i == 0) ? prev_service[0] + prev_service[1]
                                                    : prev_service[q + 1];
                    wait = std::max(0.0, prev_wait[q] + carried -
                                             (arrival_time - last_arrival[q]));
                }
                const double sojourn = wait + service_draw[q];
                prev_wait[q] = wait;
                last_arrival[q] = arrival_time;
                seen[q] = 1;
                e2e += sojourn;
                if (record) {
                    rec.out.per_node_waiting[q].push_back(wait);
                    rec.out.per_node_sojourn[q].push_back(sojourn);
                }
                if (sojourn > (*plan.drop_deadlines)[q]) {
                    drop_node = i + 1;
                    continue;
                }
                arrival_time += sojourn;
            }
            if (record) {
                rec.out.end_to_end_delay.push_back(drop_node >= 0 ? detail::kNaN : e2e);
                rec.out.dropped_at.push_back(drop_node);
            }
        }
        prev_service = service_draw;
    }
    return std::move(rec.out);
}

inline DelaySampleSet simulate(const SimulationPlan& plan) {
    return plan.config.duplex == Duplex::FullDuplex ? simulate_full_duplex(plan)
                                                    : simulate_half_duplex(plan);
}

namespace detail {

inline const std::vector<double>& tail_source(const DelaySampleSet& samples, TailKind kind,
                                              std::optional<int> node) {
    if (kind == TailKind::EndToEnd) return samples.end_to_end_delay;
    if (!node) throw std::invalid_argument("per-node tail estimation requires a node index");
    if (*node < 1 || *node > samples.num_queues())
        throw std::invalid_argument("node index out of range");
    const auto q = static_cast<std::size_t>(*node - 1);
    return kind == TailKind::PerNodeWaiting ? samples.per_node_waiting[q]
                                            : samples.per_node_sojourn[q];
}

// Successive delay samples are autocorrelated, so the plain binomial width
// understates the estimator's error; the batch-means standard error does not.
inline TailEstimate tail_at(const std::vector<double>& values, std::size_t begin,
                            std::size_t end, double k) {
    std::int64_t exceed = 0;
    std::int64_t valid = 0;
    for (std::size_t idx = begin; idx < end; ++idx) {
        const double v = values[idx];
        if (std::isnan(v)) continue;
        ++valid;
        if (v > k) ++exceed;
    }
    TailEstimate est;
    est.k = k;
    est.sample_count = valid;
    if (valid == 0) return est;
    const double p = static_cast<double>(exceed) / static_cast<double>(valid);
    est.probability = p;
    est.half_width_95 = 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(valid));

    const std::size_t span = end - begin;
    const std::size_t batches = std::min<std::size_t>(100, span / 20);
    if (batches >= 2) {
        const std::size_t batch_len = span / batches;
        double sum = 0.0, sum_sq = 0.0;
        std::size_t used = 0;
        for (std::size_t b = 0; b < batches; ++b) {
            std::int64_t b_exceed = 0, b_valid = 0;
            const std::size_t lo = begin + b * batch_len;
            for (std::size_t idx = lo; idx < lo + batch_len; ++idx) {
                const double v = values[idx];
                if (std::isnan(v)) continue;
                ++b_valid;
                if (v > k) ++b_exceed;
            }
            if (b_valid == 0) continue;
            const double bp = static_cast<double>(b_exceed) / static_cast<double>(b_valid);
            sum += bp;
            sum_sq += bp * bp;
            ++used;
        }
        if (used >= 2) {
            const double m = sum / static_cast<double>(used);
            const double var = std::max(0.0, sum_sq / static_cast<double>(used) - m * m);
            est.standard_error =
                std::sqrt(var / static_cast<double>(used - 1));
        }
    }
    if (est.standard_error == 0.0)
        est.standard_error = est.half_width_95 / 1.96;
    return est;
}

}  // namespace detail

/// Empirical exceedance probabilities with 95% normal-approximation
/// confidence half-widths, one estimate per grid point.
inline std::vector<TailEstimate> estimate_tails(const DelaySampleSet& samples, TailKind kind,
                                                std::optional<int> node,
                                                const std::vector<double>& tail_grid) {
    if (tail_grid.empty()) throw std::invalid_argument("tail grid must be nonempty");
    const auto& values = detail::tail_source(samples, kind, node);
    if (values.empty()) throw std::invalid_argument("sample set is empty");
    std::vector<TailEstimate> out;
    out.reserve(tail_grid.size());
    for (double k : tail_grid) out.push_back(detail::tail_at(values, 0, values.size(), k));
    return out;
}

/// Least-squares slope of log(probability) against k over the estimates above
/// the noise floor 10/sample_count; returns the negated slope.
inline double estimate_decay_rate(const std::vector<TailEstimate>& tails) {
    std::vector<double> xs, ys;
    for (const auto& t : tails) {
        if (t.sample_count <= 0) continue;
        if (t.probability <= 10.0 / static_cast<double>(t.sample_count)) continue;
        xs.push_back(t.k);
        ys.push_back(std::log(t.probability));
    }
    if (xs.size() < 3)
        throw insufficient_data_error("decay-rate regression needs at least 3 usable tail points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) throw insufficient_data_error("tail grid points must be distinct");
    return -(sxy / sxx);
}

/// Stationarity check: first-half and second-half tail estimates must agree
/// within 3 combined standard errors at every grid point above the noise
/// floor of either half.
inline bool stationarity_check(const DelaySampleSet& samples, TailKind kind,
                               std::optional<int> node, const std::vector<double>& tail_grid) {
    const auto& values = detail::tail_source(samples, kind, node);
    if (values.size() < 2) throw std::invalid_argument("too few samples for stationarity check");
    const std::size_t mid = values.size() / 2;
    for (double k : tail_grid) {
        const TailEstimate a = detail::tail_at(values, 0, mid, k);
        const TailEstimate b = detail::tail_at(values, mid, values.size(), k);
        if (a.sample_count == 0 || b.sample_count == 0) continue;
        const double floor_a = 10.0 / static_cast<double>(a.sample_count);
        const double floor_b = 10.0 / static_cast<double>(b.sample_count);
        if (a.probability <= floor_a && b.probability <= floor_b) continue;
        const double se = std::sqrt(a.standard_error * a.standard_error +
                                    b.standard_error * b.standard_error);
        if (std::abs(a.probability - b.probability) > 3.0 * se) return false;
    }
    return true;
}

enum class SampleExportFormat { DelimitedText, FlatBinary };

/// Raw sample export: one row per (packet, queue) with waiting, service and
/// sojourn columns. Text rows are comma-delimited; the binary layout is five
/// little-endian doubles per row in the same order.
inline void export_samples(const DelaySampleSet& samples, std::ostream& os,
                           SampleExportFormat format) {
    const int queues = samples.num_queues();
    const std::int64_t n = samples.num_samples();
    if (format == SampleExportFormat::DelimitedText)
        os << "packet,node,waiting,service,sojourn\n";
    for (std::int64_t p = 0; p < n; ++p) {
        for (int q = 0; q < queues; ++q) {
            const double w = samples.per_node_waiting[static_cast<std::size_t>(q)]
                                                     [static_cast<std::size_t>(p)];
            const double d = samples.per_node_sojourn[static_cast<std::size_t>(q)]
                                                     [static_cast<std::size_t>(p)];
            const double s = d - w;
            if (format == SampleExportFormat::DelimitedText) {
                os << p << ',' << (q + 1) << ',' << w << ',' << s << ',' << d << '\n';
            } else {
                const double row[5] = {static_cast<double>(p), static_cast<double>(q + 1), w, s,
                                       d};
                os.write(reinterpret_cast<const char*>(row), sizeof(row));
            }
        }
    }
}

}  // namespace arq
