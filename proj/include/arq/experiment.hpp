#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "arq/errors.hpp"
#include "arq/optimizer.hpp"
#include "arq/simulator.hpp"

namespace arq {

enum class Command { Dmt, Cost, Optimize, Simulate, Validate, Sweep };

enum class OutputFormat { Csv, Json };

struct SweepSpec {
    std::string parameter;  // one of snr_db | k | r | mu | L
    std::vector<double> values;
};

struct OutputOptions {
    std::string directory = "out";
    OutputFormat format = OutputFormat::Csv;
};

/// Parsed experiment: a network instance plus solver/simulation settings and
/// output options. The command comes from the CLI, everything else from the
/// configuration document.
struct ExperimentSpec {
    NetworkConfig network;
    Command command = Command::Optimize;
    std::optional<SweepSpec> sweep;
    SolverOptions solver;
    std::int64_t num_packets = 1'000'000;
    std::int64_t warmup_packets = 10'000;
    std::uint64_t sim_seed = 1;
    std::vector<double> tail_grid;  // empty: derived from the deadline budget
    std::optional<Allocation> allocation;
    OutputOptions output;
};

namespace detail {

inline std::string format_exact(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string format_sig9(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

struct RawEntry {
    std::string value;
    int line = 0;
    mutable bool consumed = false;
};

struct RawConfig {
    std::map<std::string, RawEntry> entries;  // "section.key" -> value

    const RawEntry* find(const std::string& section, const std::string& key) const {
        const auto it = entries.find(section + "." + key);
        if (it == entries.end()) return nullptr;
        it->second.consumed = true;
        return &it->second;
    }
};

inline std::string trim(std::string_view sv) {
    std::size_t b = 0, e = sv.size();
    while (b < e && std::isspace(static_cast<unsigned char>(sv[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(sv[e - 1]))) --e;
    return std::string(sv.substr(b, e - b));
}

inline RawConfig scan_document(const std::string& text) {
    static const std::vector<std::string> known_sections{
        "network", "allocation", "solver", "simulation", "output", "sweep"};
    RawConfig raw;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']')
                throw parse_error(body, line_no, "malformed section header");
            section = trim(std::string_view(body).substr(1, body.size() - 2));
            if (std::find(known_sections.begin(), known_sections.end(), section) ==
                known_sections.end())
                throw parse_error(section, line_no, "unknown section");
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw parse_error(body, line_no, "expected key = value");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        if (section.empty()) throw parse_error(key, line_no, "key outside any section");
        if (key.empty()) throw parse_error(body, line_no, "empty key");
        const std::string full = section + "." + key;
        if (raw.entries.count(full)) throw parse_error(full, line_no, "duplicate key");
        raw.entries.emplace(full, RawEntry{value, line_no, false});
    }
    return raw;
}

inline double parse_double_value(const std::string& key, const RawEntry& e) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw parse_error(key, e.line, "expected a real number, got '" + e.value + "'");
    }
}

inline std::int64_t parse_int_value(const std::string& key, const RawEntry& e) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw parse_error(key, e.line, "expected an integer, got '" + e.value + "'");
    }
}

inline std::uint64_t parse_u64_value(const std::string& key, const RawEntry& e) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw parse_error(key, e.line, "expected an unsigned integer, got '" + e.value + "'");
    }
}

inline bool parse_bool_value(const std::string& key, const RawEntry& e) {
    if (e.value == "true") return true;
    if (e.value == "false") return false;
    throw parse_error(key, e.line, "expected true or false, got '" + e.value + "'");
}

inline std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::string token;
    for (char c : value) {
        if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
            if (!token.empty()) out.push_back(std::move(token));
            token.clear();
        } else {
            token.push_back(c);
        }
    }
    if (!token.empty()) out.push_back(std::move(token));
    return out;
}

inline std::vector<double> parse_double_list(const std::string& key, const RawEntry& e) {
    std::vector<double> out;
    for (const auto& tok : split_list(e.value)) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw parse_error(key, e.line, "expected a list of reals, got '" + e.value + "'");
        }
    }
    return out;
}

inline const RawEntry& require(const RawConfig& raw, const std::string& section,
                               const std::string& key) {
    const RawEntry* e = raw.find(section, key);
    if (!e) throw parse_error(section + "." + key, 0, "missing required key");
    return *e;
}

}  // namespace detail

inline ExperimentSpec parse_spec(const std::string& text) {
    using namespace detail;
    const RawConfig raw = scan_document(text);
    ExperimentSpec spec;

    // [network]
    {
        const auto& nn = require(raw, "network", "num_nodes");
        spec.network.num_nodes = static_cast<int>(parse_int_value("num_nodes", nn));
        if (spec.network.num_nodes < 2)
            throw parse_error("num_nodes", nn.line, "must be at least 2");

        const auto& ant = require(raw, "network", "antennas");
        for (const auto& tok : split_list(ant.value)) {
            try {
                spec.network.antennas.push_back(std::stoi(tok));
            } catch (const std::exception&) {
                throw parse_error("antennas", ant.line, "expected a list of integers");
            }
        }
        if (static_cast<int>(spec.network.antennas.size()) != spec.network.num_nodes)
            throw parse_error("antennas", ant.line, "need exactly one entry per node");
        for (int m : spec.network.antennas)
            if (m < 1) throw parse_error("antennas", ant.line, "antenna counts must be positive");

        const RawEntry* db = raw.find("network", "snr_db");
        const RawEntry* lin = raw.find("network", "snr_linear");
        if (db && lin)
            throw parse_error("snr_db", db->line, "give either snr_db or snr_linear, not both");
        if (!db && !lin) throw parse_error("network.snr_db", 0, "missing required key");
        if (db) {
            spec.network.snr_linear = snr_db_to_linear(parse_double_value("snr_db", *db));
            if (!(spec.network.snr_linear > 1.0))
                throw parse_error("snr_db", db->line, "SNR must exceed 0 dB");
        } else {
            spec.network.snr_linear = parse_double_value("snr_linear", *lin);
            if (!(spec.network.snr_linear > 1.0))
                throw parse_error("snr_linear", lin->line, "SNR must exceed 1");
        }

        const auto& r = require(raw, "network", "multiplexing_gain");
        spec.network.multiplexing_gain = parse_double_value("multiplexing_gain", r);
        if (spec.network.multiplexing_gain < 0.0)
            throw parse_error("multiplexing_gain", r.line, "must be nonnegative");

        const auto& lb = require(raw, "network", "arq_budget");
        spec.network.arq_budget = parse_double_value("arq_budget", lb);
        if (spec.network.arq_budget < static_cast<double>(spec.network.num_nodes - 1))
            throw parse_error("arq_budget", lb.line, "must be at least num_nodes - 1");

        const auto& kb = require(raw, "network", "deadline_total");
        spec.network.deadline_total = parse_double_value("deadline_total", kb);
        if (!(spec.network.deadline_total > 0.0))
            throw parse_error("deadline_total", kb.line, "must be positive");

        const auto& mu = require(raw, "network", "mean_interarrival");
        spec.network.mean_interarrival = parse_double_value("mean_interarrival", mu);
        if (spec.network.mean_interarrival < 1.0)
            throw parse_error("mean_interarrival", mu.line, "must be at least 1");

        const auto& dup = require(raw, "network", "duplex");
        if (dup.value == "full")
            spec.network.duplex = Duplex::FullDuplex;
        else if (dup.value == "half")
            spec.network.duplex = Duplex::HalfDuplex;
        else
            throw parse_error("duplex", dup.line, "expected full or half");

        const auto& mode = require(raw, "network", "constraint_mode");
        if (mode.value == "per_hop")
            spec.network.constraint_mode = ConstraintMode::PerHop;
        else if (mode.value == "end_to_end")
            spec.network.constraint_mode = ConstraintMode::EndToEnd;
        else
            throw parse_error("constraint_mode", mode.line, "expected per_hop or end_to_end");

        spec.network.validate();
    }

    // [allocation]
    if (const RawEntry* rounds = raw.find("allocation", "rounds")) {
        Allocation alloc;
        alloc.rounds = parse_double_list("rounds", *rounds);
        if (static_cast<int>(alloc.rounds.size()) != spec.network.num_links())
            throw parse_error("rounds", rounds->line, "need exactly one entry per link");
        if (const RawEntry* deadlines = raw.find("allocation", "deadlines")) {
            alloc.deadlines = parse_double_list("deadlines", *deadlines);
            if (static_cast<int>(alloc.deadlines->size()) != spec.network.num_links())
                throw parse_error("deadlines", deadlines->line,
                                  "need exactly one entry per link");
        }
        spec.allocation = std::move(alloc);
    } else if (const RawEntry* deadlines = raw.find("allocation", "deadlines")) {
        throw parse_error("deadlines", deadlines->line, "deadlines require rounds");
    }

    // [solver]
    if (const RawEntry* e = raw.find("solver", "max_iterations"))
        spec.solver.max_iterations = static_cast<int>(parse_int_value("max_iterations", *e));
    if (const RawEntry* e = raw.find("solver", "gradient_tolerance"))
        spec.solver.gradient_tolerance = parse_double_value("gradient_tolerance", *e);
    if (const RawEntry* e = raw.find("solver", "multistart_count"))
        spec.solver.multistart_count = static_cast<int>(parse_int_value("multistart_count", *e));
    if (const RawEntry* e = raw.find("solver", "integer_refinement"))
        spec.solver.integer_refinement = parse_bool_value("integer_refinement", *e);
    if (const RawEntry* e = raw.find("solver", "oracle_grid_step"))
        spec.solver.oracle_grid_step = parse_double_value("oracle_grid_step", *e);
    if (const RawEntry* e = raw.find("solver", "seed"))
        spec.solver.seed = parse_u64_value("seed", *e);
    try {
        spec.solver.validate();
    } catch (const std::invalid_argument& ex) {
        throw parse_error("solver", 0, ex.what());
    }

    // [simulation]
    if (const RawEntry* e = raw.find("simulation", "num_packets")) {
        spec.num_packets = parse_int_value("num_packets", *e);
        if (spec.num_packets < 1) throw parse_error("num_packets", e->line, "must be positive");
    }
    if (const RawEntry* e = raw.find("simulation", "warmup_packets")) {
        spec.warmup_packets = parse_int_value("warmup_packets", *e);
        if (spec.warmup_packets < 0)
            throw parse_error("warmup_packets", e->line, "must be nonnegative");
    }
    if (spec.num_packets <= spec.warmup_packets)
        throw parse_error("simulation.num_packets", 0, "must exceed warmup_packets");
    if (const RawEntry* e = raw.find("simulation", "seed"))
        spec.sim_seed = parse_u64_value("seed", *e);
    if (const RawEntry* e = raw.find("simulation", "tail_grid")) {
        spec.tail_grid = parse_double_list("tail_grid", *e);
        if (spec.tail_grid.empty()) throw parse_error("tail_grid", e->line, "must be nonempty");
        for (double k : spec.tail_grid)
            if (k < 0.0) throw parse_error("tail_grid", e->line, "entries must be nonnegative");
    }

    // [output]
    if (const RawEntry* e = raw.find("output", "directory")) {
        if (e->value.empty()) throw parse_error("directory", e->line, "must be nonempty");
        spec.output.directory = e->value;
    }
    if (const RawEntry* e = raw.find("output", "format")) {
        if (e->value == "csv")
            spec.output.format = OutputFormat::Csv;
        else if (e->value == "json")
            spec.output.format = OutputFormat::Json;
        else
            throw parse_error("format", e->line, "expected csv or json");
    }

    // [sweep]
    if (const RawEntry* p = raw.find("sweep", "parameter")) {
        SweepSpec sweep;
        sweep.parameter = p->value;
        static const std::vector<std::string> allowed{"snr_db", "k", "r", "mu", "L"};
        if (std::find(allowed.begin(), allowed.end(), sweep.parameter) == allowed.end())
            throw parse_error("parameter", p->line, "expected one of snr_db, k, r, mu, L");
        const auto& vals = require(raw, "sweep", "values");
        sweep.values = parse_double_list("values", vals);
        if (sweep.values.empty()) throw parse_error("values", vals.line, "must be nonempty");
        spec.sweep = std::move(sweep);
    } else if (const RawEntry* vals = raw.find("sweep", "values")) {
        throw parse_error("values", vals->line, "sweep values require a parameter");
    }

    for (const auto& [full, entry] : raw.entries)
        if (!entry.consumed) throw parse_error(full, entry.line, "unknown key");
    return spec;
}

namespace detail {

inline void emit_kv(std::string& out, const std::string& key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += "\n";
}

inline std::string join_list(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        out += format_exact(values[i]);
    }
    return out;
}

}  // namespace detail

/// Effective configuration with every default made explicit. Parsing the
/// emitted text reproduces the spec exactly (snr is emitted on the linear
/// scale to keep the round trip lossless).
inline std::string emit_effective_config(const ExperimentSpec& spec) {
    using namespace detail;
    std::string out;
    out += "[network]\n";
    emit_kv(out, "num_nodes", std::to_string(spec.network.num_nodes));
    {
        std::string ant;
        for (std::size_t i = 0; i < spec.network.antennas.size(); ++i) {
            if (i) ant += ",";
            ant += std::to_string(spec.network.antennas[i]);
        }
        emit_kv(out, "antennas", ant);
    }
    emit_kv(out, "snr_linear", format_exact(spec.network.snr_linear));
    emit_kv(out, "multiplexing_gain", format_exact(spec.network.multiplexing_gain));
    emit_kv(out, "arq_budget", format_exact(spec.network.arq_budget));
    emit_kv(out, "deadline_total", format_exact(spec.network.deadline_total));
    emit_kv(out, "mean_interarrival", format_exact(spec.network.mean_interarrival));
    emit_kv(out, "duplex", spec.network.duplex == Duplex::FullDuplex ? "full" : "half");
    emit_kv(out, "constraint_mode",
            spec.network.constraint_mode == ConstraintMode::PerHop ? "per_hop" : "end_to_end");
    if (spec.allocation) {
        out += "[allocation]\n";
        emit_kv(out, "rounds", join_list(spec.allocation->rounds));
        if (spec.allocation->deadlines)
            emit_kv(out, "deadlines", join_list(*spec.allocation->deadlines));
    }
    out += "[solver]\n";
    emit_kv(out, "max_iterations", std::to_string(spec.solver.max_iterations));
    emit_kv(out, "gradient_tolerance", format_exact(spec.solver.gradient_tolerance));
    emit_kv(out, "multistart_count", std::to_string(spec.solver.multistart_count));
    emit_kv(out, "integer_refinement", spec.solver.integer_refinement ? "true" : "false");
    emit_kv(out, "oracle_grid_step", format_exact(spec.solver.oracle_grid_step));
    emit_kv(out, "seed", std::to_string(spec.solver.seed));
    out += "[simulation]\n";
    emit_kv(out, "num_packets", std::to_string(spec.num_packets));
    emit_kv(out, "warmup_packets", std::to_string(spec.warmup_packets));
    emit_kv(out, "seed", std::to_string(spec.sim_seed));
    if (!spec.tail_grid.empty()) emit_kv(out, "tail_grid", join_list(spec.tail_grid));
    out += "[output]\n";
    emit_kv(out, "directory", spec.output.directory);
    emit_kv(out, "format", spec.output.format == OutputFormat::Csv ? "csv" : "json");
    if (spec.sweep) {
        out += "[sweep]\n";
        emit_kv(out, "parameter", spec.sweep->parameter);
        emit_kv(out, "values", join_list(spec.sweep->values));
    }
    return out;
}

namespace detail {

// One-line rendering of the effective configuration for table comments.
inline std::string config_comment(const ExperimentSpec& spec) {
    std::string flat = emit_effective_config(spec);
    std::string out = "# config:";
    std::string section;
    std::istringstream in(flat);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.front() == '[') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find(" = ");
        out += " " + section + "." + line.substr(0, eq) + "=" + line.substr(eq + 3);
    }
    return out;
}

using Cell = nlohmann::ordered_json;

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

inline std::string render_cell_csv(const Cell& cell) {
    if (cell.is_null()) return "";
    if (cell.is_string()) return cell.get<std::string>();
    if (cell.is_boolean()) return cell.get<bool>() ? "true" : "false";
    if (cell.is_number_integer()) return std::to_string(cell.get<std::int64_t>());
    if (cell.is_number_unsigned()) return std::to_string(cell.get<std::uint64_t>());
    return format_sig9(cell.get<double>());
}

inline std::filesystem::path write_table(const ExperimentSpec& spec, const Table& table) {
    namespace fs = std::filesystem;
    const fs::path dir(spec.output.directory);
    fs::create_directories(dir);
    const bool csv = spec.output.format == OutputFormat::Csv;
    const fs::path path = dir / (table.name + (csv ? ".csv" : ".json"));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    if (csv) {
        out << config_comment(spec) << "\n";
        for (std::size_t c = 0; c < table.columns.size(); ++c)
            out << (c ? "," : "") << table.columns[c];
        out << "\n";
        for (const auto& row : table.rows) {
            for (std::size_t c = 0; c < row.size(); ++c)
                out << (c ? "," : "") << render_cell_csv(row[c]);
            out << "\n";
        }
    } else {
        nlohmann::ordered_json doc;
        doc["config"] = config_comment(spec).substr(2);  // strip the "# "
        doc["columns"] = table.columns;
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (const auto& row : table.rows) {
            nlohmann::ordered_json r = nlohmann::ordered_json::array();
            for (const auto& cell : row) r.push_back(cell);
            rows.push_back(std::move(r));
        }
        doc["rows"] = std::move(rows);
        out << doc.dump(2) << "\n";
    }
    return path;
}

inline std::vector<double> effective_tail_grid(const ExperimentSpec& spec) {
    if (!spec.tail_grid.empty()) return spec.tail_grid;
    std::vector<double> grid;
    for (double f : {0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0})
        grid.push_back(f * spec.network.deadline_total);
    return grid;
}

inline SimulationPlan plan_from_spec(const ExperimentSpec& spec) {
    if (!spec.allocation)
        throw parse_error("allocation.rounds", 0, "simulation commands need an allocation");
    SimulationPlan plan;
    plan.config = spec.network;
    plan.rounds = spec.allocation->rounds;
    plan.num_packets = spec.num_packets;
    plan.warmup_packets = spec.warmup_packets;
    plan.seed = spec.sim_seed;
    plan.tail_grid = effective_tail_grid(spec);
    return plan;
}

inline double theta_star_of(const ExperimentSpec& spec) {
    return e2e_decay_rate(spec.allocation->rounds, spec.network.mean_interarrival);
}

inline Table optimize_table(const ExperimentSpec& spec, const SolveResult& sol,
                            const std::string& name) {
    const bool per_hop = spec.network.constraint_mode == ConstraintMode::PerHop;
    Table t;
    t.name = name;
    t.columns = {"link",       "L",          "k",        "arq_term",
                 "queue_term", "total_cost", "kkt_residual", "converged"};
    for (std::size_t i = 0; i < sol.allocation.rounds.size(); ++i) {
        Cell k = per_hop ? Cell((*sol.allocation.deadlines)[i]) : Cell();
        Cell queue = per_hop ? Cell(sol.cost.queue_terms[i]) : Cell();
        t.rows.push_back({Cell(static_cast<std::int64_t>(i + 1)),
                          Cell(sol.allocation.rounds[i]), k, Cell(sol.cost.arq_terms[i]), queue,
                          Cell(), Cell(), Cell()});
    }
    Cell summary_queue = per_hop ? Cell() : Cell(sol.cost.queue_terms.front());
    t.rows.push_back({Cell("summary"), Cell(), Cell(), Cell(), summary_queue,
                      Cell(sol.cost.total), Cell(sol.kkt_residual), Cell(sol.converged)});
    return t;
}

inline Table validate_table(const ExperimentSpec& spec) {
    const SimulationPlan plan = plan_from_spec(spec);
    const DelaySampleSet samples = simulate(plan);
    const auto& grid = plan.tail_grid;
    Table t;
    t.name = "validate";
    t.columns = {"quantity", "k", "analytic", "empirical", "half_width_95", "verdict"};

    // Lemma-1 rows apply to the full-duplex tandem, where each node is the
    // plain M/M/1 with its own service stream.
    if (spec.network.duplex == Duplex::FullDuplex) {
        for (int q = 1; q <= samples.num_queues(); ++q) {
            const double rounds = spec.allocation->rounds[static_cast<std::size_t>(q - 1)];
            const auto tails = estimate_tails(samples, TailKind::PerNodeWaiting, q, grid);
            for (const auto& est : tails) {
                const double analytic =
                    per_hop_tail(rounds, spec.network.mean_interarrival, est.k);
                // Agreement is judged only where the estimate clears the
                // noise floor; deeper tail points are not measurable at this
                // sample count.
                const bool measurable =
                    est.probability > 10.0 / static_cast<double>(est.sample_count);
                const bool pass =
                    std::abs(est.probability - analytic) <= 3.0 * est.standard_error;
                t.rows.push_back({Cell("waiting_node" + std::to_string(q)), Cell(est.k),
                                  Cell(analytic), Cell(est.probability),
                                  Cell(est.half_width_95),
                                  Cell(!measurable ? "SKIP" : (pass ? "PASS" : "FAIL"))});
            }
        }
    }

    const double theta = theta_star_of(spec);
    try {
        const double est = estimate_decay_rate(
            estimate_tails(samples, TailKind::EndToEnd, std::nullopt, grid));
        const bool pass = theta > 0.0 && std::abs(est - theta) <= 0.10 * theta;
        t.rows.push_back({Cell("end_to_end_decay"), Cell(), Cell(theta), Cell(est), Cell(),
                          Cell(pass ? "PASS" : "FAIL")});
    } catch (const insufficient_data_error&) {
        t.rows.push_back(
            {Cell("end_to_end_decay"), Cell(), Cell(theta), Cell(), Cell(), Cell("FAIL")});
    }

    const bool stationary =
        stationarity_check(samples, TailKind::EndToEnd, std::nullopt, grid);
    t.rows.push_back({Cell("stationarity"), Cell(), Cell(), Cell(), Cell(),
                      Cell(stationary ? "PASS" : "FAIL")});
    return t;
}

}  // namespace detail

struct RunReport {
    std::vector<std::string> files;
};

/// Executes the spec's command and writes one or more tables into the output
/// directory. Returns the written paths in emission order.
inline RunReport run(const ExperimentSpec& spec) {
    using namespace detail;
    spec.network.validate();
    spec.solver.validate();
    if ((spec.command == Command::Sweep) != spec.sweep.has_value())
        throw parse_error("sweep.parameter", 0,
                          "a sweep section is required exactly when the command is sweep");
    RunReport report;
    const auto emit = [&](const Table& t) {
        report.files.push_back(write_table(spec, t).string());
    };

    switch (spec.command) {
        case Command::Dmt: {
            const auto curves = link_curves(spec.network);
            for (std::size_t i = 0; i < curves.size(); ++i) {
                Table t;
                t.name = "dmt_link" + std::to_string(i + 1);
                t.columns = {"r", "d"};
                for (int j = 0; j <= curves[i].max_multiplexing(); ++j)
                    t.rows.push_back({Cell(static_cast<double>(j)),
                                      Cell(curves[i].diversity[static_cast<std::size_t>(j)])});
                emit(t);
            }
            break;
        }
        case Command::Cost: {
            if (!spec.allocation)
                throw parse_error("allocation.rounds", 0, "the cost command needs an allocation");
            const bool per_hop = spec.network.constraint_mode == ConstraintMode::PerHop;
            const CostBreakdown cost = per_hop
                                           ? total_cost_per_hop(spec.network, *spec.allocation)
                                           : total_cost_e2e(spec.network, *spec.allocation);
            Table t;
            t.name = "cost";
            t.columns = {"link",      "L",          "k",
                         "arq_term",  "queue_term", "log_arq_term",
                         "log_queue_term", "total"};
            for (std::size_t i = 0; i < cost.arq_terms.size(); ++i) {
                Cell k = per_hop ? Cell((*spec.allocation->deadlines)[i]) : Cell();
                Cell queue = per_hop ? Cell(cost.queue_terms[i]) : Cell();
                Cell log_queue = per_hop ? Cell(cost.log_queue_terms[i]) : Cell();
                t.rows.push_back({Cell(static_cast<std::int64_t>(i + 1)),
                                  Cell(spec.allocation->rounds[i]), k, Cell(cost.arq_terms[i]),
                                  queue, Cell(cost.log_arq_terms[i]), log_queue, Cell()});
            }
            if (!per_hop)
                t.rows.push_back({Cell("queue"), Cell(), Cell(spec.network.deadline_total),
                                  Cell(), Cell(cost.queue_terms.front()), Cell(),
                                  Cell(cost.log_queue_terms.front()), Cell()});
            t.rows.push_back({Cell("total"), Cell(), Cell(), Cell(), Cell(), Cell(), Cell(),
                              Cell(cost.total)});
            emit(t);
            break;
        }
        case Command::Optimize: {
            const SolveResult sol = solve(spec.network, spec.solver);
            emit(optimize_table(spec, sol, "optimize"));
            break;
        }
        case Command::Simulate: {
            const SimulationPlan plan = plan_from_spec(spec);
            const DelaySampleSet samples = simulate(plan);
            const auto grid = plan.tail_grid;
            Table t;
            t.name = "tails";
            t.columns = {"quantity", "node",           "k",           "probability",
                         "half_width_95", "standard_error", "sample_count"};
            const auto add_rows = [&](const std::string& name, TailKind kind,
                                      std::optional<int> node) {
                for (const auto& est : estimate_tails(samples, kind, node, grid))
                    t.rows.push_back({Cell(name),
                                      node ? Cell(static_cast<std::int64_t>(*node)) : Cell(),
                                      Cell(est.k), Cell(est.probability),
                                      Cell(est.half_width_95), Cell(est.standard_error),
                                      Cell(est.sample_count)});
            };
            add_rows("end_to_end", TailKind::EndToEnd, std::nullopt);
            for (int q = 1; q <= samples.num_queues(); ++q) {
                add_rows("waiting", TailKind::PerNodeWaiting, q);
                add_rows("sojourn", TailKind::PerNodeSojourn, q);
            }
            emit(t);

            Table d;
            d.name = "decay";
            d.columns = {"quantity", "estimate", "theta_star", "relative_error"};
            const double theta = theta_star_of(spec);
            try {
                const double est = estimate_decay_rate(
                    estimate_tails(samples, TailKind::EndToEnd, std::nullopt, grid));
                d.rows.push_back({Cell("end_to_end_decay"), Cell(est), Cell(theta),
                                  Cell(theta > 0.0 ? std::abs(est - theta) / theta : 0.0)});
            } catch (const insufficient_data_error&) {
                d.rows.push_back({Cell("end_to_end_decay"), Cell(), Cell(theta), Cell()});
            }
            emit(d);
            break;
        }
        case Command::Validate: {
            emit(validate_table(spec));
            break;
        }
        case Command::Sweep: {
            Table t;
            t.name = "sweep";
            t.columns = {"value"};
            const int m = spec.network.num_links();
            for (int i = 1; i <= m; ++i) t.columns.push_back("L" + std::to_string(i));
            if (spec.network.constraint_mode == ConstraintMode::PerHop)
                for (int i = 1; i <= m; ++i) t.columns.push_back("k" + std::to_string(i));
            t.columns.insert(t.columns.end(),
                             {"sum_L", "total_cost", "kkt_residual", "converged"});
            for (double value : spec.sweep->values) {
                NetworkConfig cfg = spec.network;
                const std::string& p = spec.sweep->parameter;
                if (p == "snr_db")
                    cfg.snr_linear = snr_db_to_linear(value);
                else if (p == "k")
                    cfg.deadline_total = value;
                else if (p == "r")
                    cfg.multiplexing_gain = value;
                else if (p == "mu")
                    cfg.mean_interarrival = value;
                else
                    cfg.arq_budget = value;
                check_solver_feasibility(cfg);
                const SolveResult sol = solve(cfg, spec.solver);
                std::vector<Cell> row{Cell(value)};
                double sum_l = 0.0;
                for (double l : sol.allocation.rounds) {
                    row.push_back(Cell(l));
                    sum_l += l;
                }
                if (spec.network.constraint_mode == ConstraintMode::PerHop)
                    for (double k : *sol.allocation.deadlines) row.push_back(Cell(k));
                row.push_back(Cell(sum_l));
                row.push_back(Cell(sol.cost.total));
                row.push_back(Cell(sol.kkt_residual));
                row.push_back(Cell(sol.converged));
                t.rows.push_back(std::move(row));
            }
            emit(t);
            break;
        }
    }
    return report;
}

}  // namespace arq
