#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tnstack/cost_model.hpp"
#include "tnstack/engines.hpp"
#include "tnstack/mps.hpp"
#include "tnstack/stacking.hpp"

namespace tnstack {

enum class BenchMethod { LP, BTN_SWEEP, BTN_GREEDY, EC, EC_HALVING };

inline std::string_view to_string(BenchMethod m) noexcept {
    switch (m) {
        case BenchMethod::LP: return "LP";
        case BenchMethod::BTN_SWEEP: return "BTN_SWEEP";
        case BenchMethod::BTN_GREEDY: return "BTN_GREEDY";
        case BenchMethod::EC: return "EC";
        case BenchMethod::EC_HALVING: return "EC_HALVING";
    }
    return "?";
}

inline std::optional<BenchMethod> parse_bench_method(std::string_view s) {
    for (auto m : {BenchMethod::LP, BenchMethod::BTN_SWEEP, BenchMethod::BTN_GREEDY, BenchMethod::EC,
                   BenchMethod::EC_HALVING})
        if (to_string(m) == s) return m;
    return std::nullopt;
}

/// Defaults reproduce the speed-vs-batch experiment: L=20, V=6, k=3, D=1.
struct BenchConfig {
    std::size_t L = 20;
    std::size_t V = 6;
    std::size_t D = 1;
    std::size_t k = 3;
    std::size_t O = 1;  ///< 1 means no output leg
    std::vector<std::size_t> batch_sizes{1, 2, 5, 10, 20, 50, 100, 200, 500, 1000};
    std::vector<BenchMethod> methods{BenchMethod::LP, BenchMethod::BTN_SWEEP, BenchMethod::BTN_GREEDY,
                                     BenchMethod::EC, BenchMethod::EC_HALVING};
    std::size_t repeats = 5;
    std::size_t warmup = 2;
    std::uint64_t seed = 1;
    std::size_t threads = 1;  ///< LP fan-out only
    std::uint64_t mem_guard = default_mem_guard();
};

struct BenchRecord {
    std::string method;
    std::size_t B = 0;
    double median_seconds = 0.0;
    double min_seconds = 0.0;
    std::uint64_t peak_elements = 0;
    double checksum = 0.0;
    std::string skipped;  ///< empty, or "oom_guard"
    std::size_t threads = 1;
};

/// Seed of input b for a benchmark seeded with `seed` (splitmix64 of both).
inline std::uint64_t input_seed(std::uint64_t seed, std::size_t b) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(b) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Mps bench_core(const BenchConfig& cfg) {
    MpsSpec spec{cfg.L, cfg.k, cfg.V, std::nullopt, cfg.seed};
    if (cfg.O > 1) spec.output = cfg.O;
    return random_mps(spec);
}

inline std::vector<Mps> bench_inputs(const BenchConfig& cfg, std::size_t B) {
    std::vector<Mps> inputs;
    inputs.reserve(B);
    for (std::size_t b = 0; b < B; ++b) inputs.push_back(random_mps({cfg.L, cfg.k, cfg.D, std::nullopt, input_seed(cfg.seed, b)}));
    return inputs;
}

namespace detail {

inline void check_bench_config(const BenchConfig& cfg) {
    if (cfg.batch_sizes.empty()) throw ArgumentError("bench: batch size list is empty");
    if (!std::is_sorted(cfg.batch_sizes.begin(), cfg.batch_sizes.end()) ||
        std::adjacent_find(cfg.batch_sizes.begin(), cfg.batch_sizes.end()) != cfg.batch_sizes.end())
        throw ArgumentError("bench: batch sizes must be strictly ascending");
    if (cfg.batch_sizes.front() == 0) throw ArgumentError("bench: batch sizes must be >= 1");
    if (cfg.repeats == 0) throw ArgumentError("bench: repeats must be >= 1");
    if (cfg.methods.empty()) throw ArgumentError("bench: no methods selected");
    if (cfg.L == 0 || cfg.V == 0 || cfg.D == 0 || cfg.k == 0 || cfg.O == 0)
        throw ArgumentError("bench: extents must be >= 1");
}

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Times one method at one batch size. Returns a skipped record when the BTN
/// plan would exceed the element guard.
inline BenchRecord bench_one(const BenchConfig& cfg, BenchMethod method, const Mps& core,
                             std::span<const Mps> inputs) {
    BenchRecord rec;
    rec.method = std::string(to_string(method));
    rec.B = inputs.size();
    rec.threads = method == BenchMethod::LP ? std::max<std::size_t>(1, cfg.threads) : 1;

    std::function<BatchResult()> run;
    switch (method) {
        case BenchMethod::LP:
            run = [&] { return contract_loop(core, inputs, {cfg.threads}); };
            break;
        case BenchMethod::BTN_SWEEP:
        case BenchMethod::BTN_GREEDY: {
            const auto strategy = method == BenchMethod::BTN_SWEEP ? PlanStrategy::SweepLR : PlanStrategy::Greedy;
            const StackedMps probe = stack_mps(std::vector<Mps>(inputs.begin(), inputs.end()));
            if (plan_btn(core, probe, strategy).predicted_peak() > cfg.mem_guard) {
                rec.skipped = "oom_guard";
                return rec;
            }
            run = [&, strategy] {
                const StackedMps stacked = stack_mps(std::vector<Mps>(inputs.begin(), inputs.end()));
                const ContractionPlan plan = plan_btn(core, stacked, strategy);
                return contract_btn(core, stacked, plan, {cfg.mem_guard});
            };
            break;
        }
        case BenchMethod::EC:
            run = [&] { return contract_ec(core, inputs); };
            break;
        case BenchMethod::EC_HALVING:
            run = [&] { return contract_ec_halving(core, inputs); };
            break;
    }

    try {
        for (std::size_t i = 0; i < cfg.warmup; ++i) (void)run();
        std::vector<double> times;
        BatchResult last;
        for (std::size_t i = 0; i < cfg.repeats; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            last = run();
            times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        rec.median_seconds = detail::median_of(times);
        rec.min_seconds = *std::min_element(times.begin(), times.end());
        rec.peak_elements = last.stats.peak_elements;
        for (double v : last.values.data()) rec.checksum += v;
    } catch (const MemoryGuardError&) {
        rec = BenchRecord{rec.method, rec.B, 0.0, 0.0, 0, 0.0, "oom_guard", rec.threads};
    }
    return rec;
}

/// Runs every (batch size, method) pair; records come out ordered by batch size,
/// then by the order of cfg.methods.
inline std::vector<BenchRecord> run_bench(const BenchConfig& cfg,
                                          const std::function<void(const BenchRecord&)>& on_record = {}) {
    detail::check_bench_config(cfg);
    const Mps core = bench_core(cfg);
    std::vector<BenchRecord> records;
    for (std::size_t B : cfg.batch_sizes) {
        const std::vector<Mps> inputs = bench_inputs(cfg, B);
        for (BenchMethod m : cfg.methods) {
            records.push_back(bench_one(cfg, m, core, inputs));
            if (on_record) on_record(records.back());
        }
    }
    return records;
}

inline constexpr std::string_view kCsvHeader = "method,B,median_seconds,min_seconds,peak_elements,checksum,skipped";

inline std::string format_g9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline std::string to_csv(std::span<const BenchRecord> records) {
    std::string out(kCsvHeader);
    out += '\n';
    for (const auto& r : records) {
        out += r.method + ',' + std::to_string(r.B) + ',' + format_g9(r.median_seconds) + ',' +
               format_g9(r.min_seconds) + ',' + std::to_string(r.peak_elements) + ',' + format_g9(r.checksum) + ',' +
               r.skipped + '\n';
    }
    return out;
}

inline void emit_csv(std::span<const BenchRecord> records, const std::string& path) {
    if (records.empty()) throw ArgumentError("emit_csv: no records");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << to_csv(records);
    if (!out) throw IoError("failed writing " + path);
}

inline std::vector<BenchRecord> parse_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw FormatError("missing benchmark CSV header");
    std::vector<BenchRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (!line.empty() && line.back() == ',') f.emplace_back();
        if (f.size() != 7) throw FormatError("benchmark CSV row needs 7 fields: " + line);
        try {
            BenchRecord r;
            r.method = f[0];
            r.B = std::stoull(f[1]);
            r.median_seconds = std::stod(f[2]);
            r.min_seconds = std::stod(f[3]);
            r.peak_elements = std::stoull(f[4]);
            r.checksum = std::stod(f[5]);
            r.skipped = f[6];
            records.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw FormatError("unparsable benchmark CSV row: " + line);
        }
    }
    return records;
}

inline std::vector<BenchRecord> parse_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path + " for reading");
    return parse_csv(in);
}

// ---------------------------------------------------------------------------
// Verification suites
// ---------------------------------------------------------------------------

enum class VerifyScale { Quick, Full };

struct SuiteResult {
    std::string name;
    std::size_t cases = 0;
    std::size_t skipped = 0;
    double max_deviation = 0.0;
    double tolerance = 0.0;
    bool passed = true;
    std::string notice;
};

struct VerifyReport {
    std::vector<SuiteResult> suites;
    [[nodiscard]] bool passed() const {
        return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed; });
    }
};

struct VerifyOptions {
    /// Dense site builder checked by the structural suites; replaceable for fault injection.
    std::function<DenseTensor(const StackedMps&, std::size_t)> materialize = [](const StackedMps& s, std::size_t j) {
        return materialize_site(s, j);
    };
};

/// Extents sampled by random_instance, each drawn uniformly from [1, max].
struct InstanceLimits {
    std::size_t max_B = 4;
    std::size_t max_L = 5;
    std::size_t max_V = 4;
    std::size_t max_D = 2;
    std::size_t max_k = 3;
    std::size_t min_k = 2;
};

struct Instance {
    Mps core;
    std::vector<Mps> inputs;
};

inline Instance random_instance(std::mt19937_64& rng, const InstanceLimits& lim, std::optional<std::size_t> output) {
    auto draw = [&rng](std::size_t lo, std::size_t hi) { return lo + static_cast<std::size_t>(rng() % (hi - lo + 1)); };
    const std::size_t B = draw(1, lim.max_B);
    const std::size_t L = draw(1, lim.max_L);
    const std::size_t V = draw(1, lim.max_V);
    const std::size_t D = draw(1, lim.max_D);
    const std::size_t k = draw(lim.min_k, lim.max_k);
    const std::uint64_t seed = rng();
    Instance inst{random_mps({L, k, V, output, seed}), {}};
    for (std::size_t b = 0; b < B; ++b) inst.inputs.push_back(random_mps({L, k, D, std::nullopt, input_seed(seed, b)}));
    return inst;
}

/// All five batch strategies on one instance.
inline std::vector<BatchResult> run_all_engines(const Instance& inst) {
    std::vector<BatchResult> out;
    out.push_back(contract_loop(inst.core, inst.inputs));
    const StackedMps stacked = stack_mps(inst.inputs);
    out.push_back(contract_btn(inst.core, stacked, plan_btn(inst.core, stacked, PlanStrategy::SweepLR)));
    out.push_back(contract_btn(inst.core, stacked, plan_btn(inst.core, stacked, PlanStrategy::Greedy)));
    out.push_back(contract_ec(inst.core, inst.inputs));
    out.push_back(contract_ec_halving(inst.core, inst.inputs));
    return out;
}

inline double max_pairwise_deviation(std::span<const BatchResult> results) {
    double worst = 0.0;
    for (std::size_t a = 0; a < results.size(); ++a)
        for (std::size_t b = a + 1; b < results.size(); ++b)
            worst = std::max(worst, max_relative_deviation(results[a].values, results[b].values));
    return worst;
}

namespace detail {

struct StackGrid {
    std::size_t max_B, min_L, max_L, max_D, min_k, max_k, seeds;
};

template <typename F>
void for_each_stack_case(const StackGrid& g, F&& f) {
    for (std::size_t B = 1; B <= g.max_B; ++B)
        for (std::size_t L = g.min_L; L <= g.max_L; ++L)
            for (std::size_t D = 1; D <= g.max_D; ++D)
                for (std::size_t k = g.min_k; k <= g.max_k; ++k)
                    for (std::size_t s = 0; s < g.seeds; ++s) {
                        const std::uint64_t seed = 1000003ULL * (((B * 16 + L) * 16 + D) * 16 + k) + s;
                        std::vector<Mps> inputs;
                        for (std::size_t b = 0; b < B; ++b)
                            inputs.push_back(random_mps({L, k, D, std::nullopt, input_seed(seed, b)}));
                        f(inputs);
                    }
}

}  // namespace detail

inline VerifyReport run_verify(VerifyScale scale, const VerifyOptions& options = {}) {
    const bool full = scale == VerifyScale::Full;
    const detail::StackGrid grid = full ? detail::StackGrid{6, 2, 6, 3, 2, 3, 3} : detail::StackGrid{4, 2, 5, 2, 2, 2, 1};
    VerifyReport report;

    {
        SuiteResult r{"stack-oracle", 0, 0, 0.0, kStackTolerance, true, {}};
        detail::for_each_stack_case(grid, [&](const std::vector<Mps>& inputs) {
            ++r.cases;
            try {
                const auto v = verify_stack_oracle(inputs, stack_mps(inputs));
                r.max_deviation = std::max(r.max_deviation, v.max_relative_deviation);
                r.passed = r.passed && v.passed;
            } catch (const OracleRefused&) {
                ++r.skipped;
            }
        });
        if (r.skipped) r.notice = std::to_string(r.skipped) + " case(s) above the oracle cap were skipped";
        report.suites.push_back(r);
    }
    {
        SuiteResult r{"block-diagonality", 0, 0, 0.0, 0.0, true, {}};
        detail::for_each_stack_case(grid, [&](const std::vector<Mps>& inputs) {
            const StackedMps s = stack_mps(inputs);
            for (std::size_t j = 0; j < s.length(); ++j) {
                ++r.cases;
                const DenseTensor dense = options.materialize(s, j);
                const double off = dense.shape() == s.site_shape(j) ? off_block_magnitude(s, j, dense)
                                                                     : std::numeric_limits<double>::infinity();
                r.max_deviation = std::max(r.max_deviation, off);
            }
        });
        r.passed = r.max_deviation == 0.0;
        report.suites.push_back(r);
    }
    {
        SuiteResult r{"general-units", 0, 0, 0.0, 0.0, true, {}};
        detail::for_each_stack_case(grid, [&](const std::vector<Mps>& inputs) {
            const StackedMps s = stack_mps(inputs);
            for (std::size_t j = 1; j + 1 < s.length(); ++j) {
                ++r.cases;
                std::vector<DenseTensor> units;
                for (const auto& m : inputs) units.push_back(permute(m.unit(j), {1, 0, 2}));
                const DenseTensor direct = stack_general_units(units, false);
                const DenseTensor dense = options.materialize(s, j);
                if (!(direct == dense)) r.max_deviation = std::numeric_limits<double>::infinity();
            }
        });
        r.passed = r.max_deviation == 0.0;
        report.suites.push_back(r);
    }
    {
        SuiteResult r{"unstack-roundtrip", 0, 0, 0.0, 0.0, true, {}};
        detail::for_each_stack_case(grid, [&](const std::vector<Mps>& inputs) {
            const StackedMps s = stack_mps(inputs);
            for (std::size_t b = 0; b < inputs.size(); ++b) {
                ++r.cases;
                if (!(unstack(s, b) == inputs[b])) r.max_deviation = std::numeric_limits<double>::infinity();
            }
        });
        r.passed = r.max_deviation == 0.0;
        report.suites.push_back(r);
    }
    {
        SuiteResult r{"engine-equivalence", 0, 0, 0.0, 1e-9, true, {}};
        const InstanceLimits lim = full ? InstanceLimits{32, 20, 8, 3, 4, 1} : InstanceLimits{};
        const std::size_t count = full ? 50 : 10;
        std::mt19937_64 rng(full ? 20220 : 2022);
        for (std::size_t i = 0; i < count; ++i) {
            const auto out = i % 3 == 2 ? std::optional<std::size_t>(10) : std::nullopt;
            const Instance inst = random_instance(rng, lim, out);
            ++r.cases;
            const auto results = run_all_engines(inst);
            r.max_deviation = std::max(r.max_deviation, max_pairwise_deviation(results));
        }
        r.passed = r.max_deviation <= r.tolerance;
        report.suites.push_back(r);
    }
    {
        // LP and EC must be exactly equivariant; BTN up to rounding.
        SuiteResult r{"permutation", 0, 0, 0.0, 1e-12, true, {}};
        std::mt19937_64 rng(full ? 77 : 7);
        const std::size_t count = full ? 20 : 5;
        for (std::size_t i = 0; i < count; ++i) {
            Instance inst = random_instance(rng, InstanceLimits{8, 6, 4, 2, 3, 2}, std::nullopt);
            std::vector<std::size_t> perm(inst.inputs.size());
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            std::shuffle(perm.begin(), perm.end(), rng);
            Instance shuffled{inst.core, {}};
            for (std::size_t p : perm) shuffled.inputs.push_back(inst.inputs[p]);
            const auto base = run_all_engines(inst);
            const auto moved = run_all_engines(shuffled);
            ++r.cases;
            for (std::size_t e = 0; e < base.size(); ++e) {
                const bool exact = base[e].method == Method::LP || base[e].method == Method::EC;
                DenseTensor expected{moved[e].values.shape()};
                const std::size_t w = expected.size() / perm.size();
                for (std::size_t q = 0; q < perm.size(); ++q)
                    for (std::size_t o = 0; o < w; ++o) expected[q * w + o] = base[e].values[perm[q] * w + o];
                const double dev = max_relative_deviation(moved[e].values, expected);
                if (exact && !(moved[e].values == expected)) r.passed = false;
                r.max_deviation = std::max(r.max_deviation, dev);
            }
        }
        r.passed = r.passed && r.max_deviation <= r.tolerance;
        report.suites.push_back(r);
    }
    return report;
}

inline std::string format_report(const VerifyReport& report) {
    std::string out;
    char line[256];
    for (const auto& s : report.suites) {
        std::snprintf(line, sizeof line, "%-20s %-4s cases=%-5zu max_dev=%-12.3e tol=%.1e", s.name.c_str(),
                      s.passed ? "PASS" : "FAIL", s.cases, s.max_deviation, s.tolerance);
        out += line;
        if (!s.notice.empty()) out += "  (" + s.notice + ")";
        out += '\n';
    }
    out += report.passed() ? "verify: all suites passed\n" : "verify: FAILED\n";
    return out;
}

}  // namespace tnstack
