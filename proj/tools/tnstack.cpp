// tnstack: stack MPS files, estimate memory, benchmark and verify the batch
// contraction engines.
//
// Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O error.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tnstack/tnstack.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

int cmd_stack(const std::vector<std::string>& in_paths, const std::string& out_path, bool dense,
              std::optional<std::size_t> placement) {
    std::vector<tnstack::Mps> inputs;
    for (const auto& p : in_paths) inputs.push_back(tnstack::mps_from_json(tnstack::read_json_file(p)));
    const tnstack::StackedMps s = tnstack::stack_mps(std::move(inputs), {placement});
    if (dense) {
        const auto units = tnstack::dense_units(s);
        tnstack::write_json_file(out_path, tnstack::units_to_json(units));
    } else {
        tnstack::write_json_file(out_path, tnstack::to_json(s));
    }
    std::printf("stacked %zu MPS of length %zu into %s\n", s.batch(), s.length(), out_path.c_str());
    return kExitOk;
}

int cmd_estimate(const std::string& method, const tnstack::CostParams& p) {
    const tnstack::CostReport r = method == "ec" ? tnstack::estimate_ec(p) : tnstack::estimate_btn_sweep(p);
    std::printf("method=%s L=%llu V=%llu B=%llu O=%llu\n", method.c_str(), static_cast<unsigned long long>(p.L),
                static_cast<unsigned long long>(p.V), static_cast<unsigned long long>(p.B),
                static_cast<unsigned long long>(p.O));
    std::printf("chain_elements=%llu\nintermediate_elements=%llu\n",
                static_cast<unsigned long long>(r.chain_elements),
                static_cast<unsigned long long>(r.intermediate_elements));
    return kExitOk;
}

int cmd_bench(tnstack::BenchConfig cfg, const std::vector<std::string>& methods, const std::string& out_path) {
    if (!methods.empty()) {
        cfg.methods.clear();
        for (const auto& m : methods) {
            const auto parsed = tnstack::parse_bench_method(m);
            if (!parsed) throw tnstack::ArgumentError("unknown method '" + m + "'");
            cfg.methods.push_back(*parsed);
        }
    }
    std::fprintf(stderr, "bench L=%zu V=%zu D=%zu k=%zu O=%zu repeats=%zu warmup=%zu seed=%llu threads=%zu\n", cfg.L,
                 cfg.V, cfg.D, cfg.k, cfg.O, cfg.repeats, cfg.warmup, static_cast<unsigned long long>(cfg.seed),
                 cfg.threads);
    const auto records = tnstack::run_bench(cfg, [](const tnstack::BenchRecord& r) {
        if (r.skipped.empty())
            std::fprintf(stderr, "  %-10s B=%-5zu median=%.3es min=%.3es peak=%llu checksum=%.9g threads=%zu\n",
                         r.method.c_str(), r.B, r.median_seconds, r.min_seconds,
                         static_cast<unsigned long long>(r.peak_elements), r.checksum, r.threads);
        else
            std::fprintf(stderr, "  %-10s B=%-5zu skipped (%s)\n", r.method.c_str(), r.B, r.skipped.c_str());
    });
    if (out_path.empty())
        std::cout << tnstack::to_csv(records);
    else
        tnstack::emit_csv(records, out_path);
    return kExitOk;
}

int cmd_verify(const std::string& scale) {
    const auto report = tnstack::run_verify(scale == "full" ? tnstack::VerifyScale::Full : tnstack::VerifyScale::Quick);
    std::cout << tnstack::format_report(report);
    return report.passed() ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tnstack: stacked matrix product states and batch contraction engines"};
    app.require_subcommand(1);

    auto* stack = app.add_subcommand("stack", "Stack MPS files into one batched MPS");
    std::vector<std::string> in_paths;
    std::string stack_out;
    bool dense = false;
    std::optional<std::size_t> placement;
    stack->add_option("--in", in_paths, "Input mps-json files")->required()->expected(1, -1);
    stack->add_option("--out", stack_out, "Output file")->required();
    stack->add_flag("--dense", dense, "Write the dense block-diagonal sites as mps-json");
    stack->add_option("--placement", placement, "Site carrying the stack leg (default: last)");

    auto* estimate = app.add_subcommand("estimate", "Closed-form memory estimate (D = 1)");
    std::string est_method = "ec";
    tnstack::CostParams params;
    estimate->add_option("--method", est_method, "ec or btn")->check(CLI::IsMember({"ec", "btn"}));
    estimate->add_option("--L", params.L, "Sites")->required();
    estimate->add_option("--V", params.V, "Core bond dimension")->required();
    estimate->add_option("--B", params.B, "Batch size")->required();
    estimate->add_option("--O", params.O, "Output extent")->capture_default_str();

    auto* bench = app.add_subcommand("bench", "Time the batch engines against batch size");
    tnstack::BenchConfig cfg;
    std::vector<std::string> methods;
    std::string bench_out;
    bench->add_option("--L", cfg.L, "Sites")->capture_default_str();
    bench->add_option("--V", cfg.V, "Core bond dimension")->capture_default_str();
    bench->add_option("--D", cfg.D, "Input bond dimension")->capture_default_str();
    bench->add_option("--k", cfg.k, "Physical dimension")->capture_default_str();
    bench->add_option("--O", cfg.O, "Output extent (1 = scalar output)")->capture_default_str();
    bench->add_option("--batches", cfg.batch_sizes, "Ascending batch sizes")->delimiter(',');
    bench->add_option("--methods", methods, "Subset of LP,BTN_SWEEP,BTN_GREEDY,EC,EC_HALVING")->delimiter(',');
    bench->add_option("--repeats", cfg.repeats, "Timed repetitions")->capture_default_str();
    bench->add_option("--warmup", cfg.warmup, "Untimed warmup runs")->capture_default_str();
    bench->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    bench->add_option("--threads", cfg.threads, "Worker threads for LP")->capture_default_str();
    bench->add_option("--mem-guard", cfg.mem_guard, "Element budget for dense BTN (env TNSTACK_MEM_GUARD)")
        ->capture_default_str();
    bench->add_option("--out", bench_out, "CSV output path (default: stdout)");

    auto* verify = app.add_subcommand("verify", "Run the verification suites");
    std::string scale = "quick";
    verify->add_option("--scale", scale, "quick or full")->check(CLI::IsMember({"quick", "full"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*stack) return cmd_stack(in_paths, stack_out, dense, placement);
        if (*estimate) return cmd_estimate(est_method, params);
        if (*bench) return cmd_bench(cfg, methods, bench_out);
        if (*verify) return cmd_verify(scale);
    } catch (const tnstack::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const tnstack::FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const tnstack::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::overflow_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
