#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "arq/errors.hpp"

namespace arq {

enum class Duplex { FullDuplex, HalfDuplex };

enum class ConstraintMode { PerHop, EndToEnd };

inline double snr_db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline double snr_linear_to_db(double linear) { return 10.0 * std::log10(linear); }

/// Full problem instance for a multihop relay line: node 1 is the source,
/// node N the destination, and link i connects node i to node i+1.
struct NetworkConfig {
    int num_nodes = 2;
    std::vector<int> antennas;       // one entry per node
    double snr_linear = 100.0;       // rho, linear scale
    double multiplexing_gain = 0.0;  // r
    double arq_budget = 1.0;         // L, sum of per-link ARQ rounds
    double deadline_total = 1.0;     // k
    double mean_interarrival = 1.0;  // mu
    Duplex duplex = Duplex::FullDuplex;
    ConstraintMode constraint_mode = ConstraintMode::PerHop;

    int num_links() const { return num_nodes - 1; }

    /// Throws std::invalid_argument on the first violated invariant.
    void validate() const {
        if (num_nodes < 2) throw std::invalid_argument("num_nodes must be at least 2");
        if (static_cast<int>(antennas.size()) != num_nodes)
            throw std::invalid_argument("antennas list must have one entry per node");
        for (std::size_t i = 0; i < antennas.size(); ++i)
            if (antennas[i] < 1)
                throw std::invalid_argument("antenna count at node " + std::to_string(i + 1) +
                                            " must be positive");
        if (!(snr_linear > 1.0)) throw std::invalid_argument("snr_linear must exceed 1");
        if (multiplexing_gain < 0.0)
            throw std::invalid_argument("multiplexing_gain must be nonnegative");
        if (arq_budget < static_cast<double>(num_links()))
            throw std::invalid_argument("arq_budget must be at least num_nodes - 1");
        if (!(deadline_total > 0.0)) throw std::invalid_argument("deadline_total must be positive");
        if (mean_interarrival < 1.0)
            throw std::invalid_argument("mean_interarrival must be at least 1");
    }
};

}  // namespace arq
