#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "arq/network.hpp"

namespace arq {

/// Piecewise-linear diversity-multiplexing tradeoff curve of one MIMO link.
/// Breakpoints are (j, (tx-j)(rx-j)) for integer j in [0, min(tx, rx)].
struct DmtCurve {
    int tx_antennas = 1;
    int rx_antennas = 1;
    std::vector<double> diversity;  // diversity[j] at multiplexing gain j

    int max_multiplexing() const { return static_cast<int>(diversity.size()) - 1; }
};

inline DmtCurve build_dmt_curve(int tx, int rx) {
    if (tx < 1 || rx < 1) throw std::invalid_argument("antenna counts must be positive");
    DmtCurve curve;
    curve.tx_antennas = tx;
    curve.rx_antennas = rx;
    const int top = std::min(tx, rx);
    curve.diversity.resize(static_cast<std::size_t>(top) + 1);
    for (int j = 0; j <= top; ++j)
        curve.diversity[static_cast<std::size_t>(j)] = static_cast<double>((tx - j) * (rx - j));
    return curve;
}

/// Diversity at multiplexing gain r: linear interpolation between integer
/// breakpoints, identically 0 for r at or beyond min(tx, rx).
inline double dmt_eval(const DmtCurve& curve, double r) {
    if (r < 0.0) throw std::invalid_argument("multiplexing gain must be nonnegative");
    const int top = curve.max_multiplexing();
    if (r >= static_cast<double>(top)) return 0.0;
    const int j = static_cast<int>(std::floor(r));
    const double dj = curve.diversity[static_cast<std::size_t>(j)];
    const double dj1 = curve.diversity[static_cast<std::size_t>(j) + 1];
    return dj + (r - static_cast<double>(j)) * (dj1 - dj);
}

/// Slope of the active linear segment. At an integer breakpoint this returns
/// the slope of the segment to the right; 0 for r at or beyond min(tx, rx).
inline double dmt_slope(const DmtCurve& curve, double r) {
    if (r < 0.0) throw std::invalid_argument("multiplexing gain must be nonnegative");
    const int top = curve.max_multiplexing();
    if (r >= static_cast<double>(top)) return 0.0;
    const int j = static_cast<int>(std::floor(r));
    return curve.diversity[static_cast<std::size_t>(j) + 1] -
           curve.diversity[static_cast<std::size_t>(j)];
}

/// DMT curves of every link i: antennas M_i transmitting to M_{i+1}.
inline std::vector<DmtCurve> link_curves(const NetworkConfig& config) {
    config.validate();
    std::vector<DmtCurve> curves;
    curves.reserve(static_cast<std::size_t>(config.num_links()));
    for (int i = 0; i < config.num_links(); ++i)
        curves.push_back(build_dmt_curve(config.antennas[static_cast<std::size_t>(i)],
                                         config.antennas[static_cast<std::size_t>(i) + 1]));
    return curves;
}

/// Asymptotic ARQ outage probability: sum over links of rho^{-f_i(r / L_i)}.
/// The raw asymptotic expression is returned without clamping to 1.
inline double arq_error_prob(const NetworkConfig& config, const std::vector<double>& alloc_rounds) {
    const auto curves = link_curves(config);
    if (alloc_rounds.size() != curves.size())
        throw std::invalid_argument("alloc_rounds must have one entry per link");
    const double log_rho = std::log(config.snr_linear);
    double total = 0.0;
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const double rounds = alloc_rounds[i];
        if (rounds < 1.0)
            throw std::invalid_argument("ARQ rounds on link " + std::to_string(i + 1) +
                                        " must be at least 1");
        total += std::exp(-dmt_eval(curves[i], config.multiplexing_gain / rounds) * log_rho);
    }
    return total;
}

/// Long-term average throughput of the multihop ARQ protocol.
inline double throughput(double rate, int num_nodes, Duplex duplex) {
    if (!(rate > 0.0)) throw std::invalid_argument("rate must be positive");
    if (num_nodes < 2) throw std::invalid_argument("num_nodes must be at least 2");
    if (duplex == Duplex::FullDuplex) return rate;
    if (num_nodes % 2 == 1) return rate / 2.0;
    return rate * (0.5 + 0.5 / static_cast<double>(num_nodes));
}

}  // namespace arq
