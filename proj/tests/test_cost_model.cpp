#include <gtest/gtest.h>

#include <cstdint>
#include <random>

#include "oracles.hpp"
#include "tnstack/cost_model.hpp"

using namespace tnstack;

namespace {

// Term-by-term evaluation by repeated addition: one B*V*V block per
// (L-1) chain unit, then the output and boundary terms.
std::uint64_t ec_chain_by_terms(std::uint64_t L, std::uint64_t B, std::uint64_t V, std::uint64_t O) {
    std::uint64_t total = 0;
    for (std::uint64_t u = 0; u + 1 < L; ++u)
        for (std::uint64_t b = 0; b < B; ++b) total += V * V;
    for (std::uint64_t b = 0; b < B; ++b) total += V * O + V;
    return total;
}

std::uint64_t btn_chain_by_terms(std::uint64_t L, std::uint64_t B, std::uint64_t V, std::uint64_t O) {
    std::uint64_t total = 0;
    const std::uint64_t BV = B * V;
    for (std::uint64_t u = 0; u + 1 < L; ++u) total += BV * BV;
    total += BV * (B * O) + BV;
    return total;
}

std::uint64_t intermediates_by_terms(std::uint64_t L, std::uint64_t B, std::uint64_t V, std::uint64_t O) {
    std::uint64_t total = 0;
    for (std::uint64_t u = 2; u < L; ++u) total += B * V;
    return total + B * O;
}

CostParams fig_params(std::uint64_t B) { return CostParams{21, B, 50, 1, 10, 3}; }

}  // namespace

TEST(EstimateEc, ReferenceParameterSet) {
    struct Row {
        std::uint64_t B, chain, inter;
    };
    // Frozen from the term-by-term oracle above.
    for (const Row& r : {Row{10, 505'500, 9'600}, Row{100, 5'055'000, 96'000}, Row{1500, 75'825'000, 1'440'000}}) {
        const auto rep = estimate_ec(fig_params(r.B));
        EXPECT_EQ(rep.chain_elements, r.chain);
        EXPECT_EQ(rep.intermediate_elements, r.inter);
        EXPECT_EQ(rep.chain_elements, ec_chain_by_terms(21, r.B, 50, 10));
        EXPECT_EQ(rep.intermediate_elements, intermediates_by_terms(21, r.B, 50, 10));
        EXPECT_EQ(rep.method, Method::EC);
    }
}

TEST(EstimateBtnSweep, ReferenceParameterSet) {
    struct Row {
        std::uint64_t B, chain;
    };
    for (const Row& r : {Row{10, 5'050'500}, Row{100, 505'005'000}, Row{1500, 113'625'075'000}}) {
        const auto rep = estimate_btn_sweep(fig_params(r.B));
        EXPECT_EQ(rep.chain_elements, r.chain);
        EXPECT_EQ(rep.chain_elements, btn_chain_by_terms(21, r.B, 50, 10));
        EXPECT_EQ(rep.method, Method::BTN);
    }
}

TEST(EstimateEc, MinimalChain) {
    const auto rep = estimate_ec(CostParams{2, 1, 1, 1, 1, 1});
    EXPECT_EQ(rep.chain_elements, 3u);
    EXPECT_EQ(rep.intermediate_elements, 1u);
}

TEST(EstimateEc, DoublingBatchDoublesCounts) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
        CostParams p{2 + rng() % 50, 1 + rng() % 500, 1 + rng() % 60, 1, 1 + rng() % 20, 3};
        const auto a = estimate_ec(p);
        p.B *= 2;
        const auto b = estimate_ec(p);
        EXPECT_EQ(b.chain_elements, 2 * a.chain_elements);
        EXPECT_EQ(b.intermediate_elements, 2 * a.intermediate_elements);
    }
}

TEST(EstimateBtnSweep, CoincidesWithEcAtBatchOne) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 100; ++t) {
        const CostParams p{2 + rng() % 50, 1, 1 + rng() % 60, 1, 1 + rng() % 20, 3};
        EXPECT_EQ(estimate_btn_sweep(p).chain_elements, estimate_ec(p).chain_elements);
    }
}

TEST(EstimateBtnSweep, SameIntermediatesAsEc) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
        const CostParams p{2 + rng() % 50, 1 + rng() % 500, 1 + rng() % 60, 1, 1 + rng() % 20, 3};
        EXPECT_EQ(estimate_btn_sweep(p).intermediate_elements, estimate_ec(p).intermediate_elements);
    }
}

TEST(CostModelProperty, RatioTendsToBatchForLongChains) {
    for (std::uint64_t B : {2u, 10u, 100u}) {
        const CostParams p{1000, B, 6, 1, 10, 3};
        const double ratio = static_cast<double>(estimate_btn_sweep(p).chain_elements) /
                             static_cast<double>(estimate_ec(p).chain_elements);
        EXPECT_NEAR(ratio / static_cast<double>(B), 1.0, 0.01) << "B=" << B;
    }
}

TEST(CostModelProperty, MonotoneInEveryParameter) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 200; ++t) {
        const CostParams p{2 + rng() % 30, 1 + rng() % 100, 1 + rng() % 30, 1, 1 + rng() % 20, 3};
        for (int field = 0; field < 4; ++field) {
            CostParams q = p;
            (field == 0 ? q.L : field == 1 ? q.B : field == 2 ? q.V : q.O) += 1;
            EXPECT_GT(estimate_ec(q).chain_elements, estimate_ec(p).chain_elements);
            EXPECT_GT(estimate_btn_sweep(q).chain_elements, estimate_btn_sweep(p).chain_elements);
            EXPECT_GE(estimate_ec(q).intermediate_elements, estimate_ec(p).intermediate_elements);
        }
    }
}

TEST(CostModel, Errors) {
    EXPECT_THROW(estimate_ec(CostParams{21, 10, 50, 2, 10, 3}), RegimeError);
    EXPECT_THROW(estimate_btn_sweep(CostParams{21, 10, 50, 2, 10, 3}), RegimeError);
    EXPECT_THROW(estimate_ec(CostParams{1, 10, 50, 1, 10, 3}), ArgumentError);
    EXPECT_THROW(estimate_ec(CostParams{21, 0, 50, 1, 10, 3}), ArgumentError);
    EXPECT_THROW(estimate_btn_sweep(CostParams{3, std::uint64_t{1} << 33, 1u << 20, 1, 1, 1}), std::overflow_error);
}

TEST(CheckEstimate, EcAtBenchmarkConfigPasses) {
    const Mps core = random_mps({20, 3, 6, std::nullopt, 1});
    const auto inputs = oracle::random_inputs(100, 20, 3, 1, 2);
    const auto run = contract_ec(core, inputs);
    const auto chk = check_estimate(run.stats, estimate_ec(CostParams{20, 100, 6, 1, 1, 3}));
    EXPECT_TRUE(chk.passed) << "ratio " << chk.ratio;
    EXPECT_EQ(chk.measured, run.stats.peak_elements);
}

TEST(CheckEstimate, BtnSweepPassesAndRatioToEcGrowsWithBatch) {
    const Mps core = random_mps({20, 3, 6, std::nullopt, 1});
    auto ratio_at = [&](std::size_t B) {
        const auto inputs = oracle::random_inputs(B, 20, 3, 1, 2);
        const auto s = stack_mps(inputs);
        const auto btn = contract_btn(core, s, plan_btn(core, s, PlanStrategy::SweepLR));
        const auto chk = check_estimate(btn.stats, estimate_btn_sweep(CostParams{20, B, 6, 1, 1, 3}));
        EXPECT_TRUE(chk.passed) << "B=" << B << " ratio " << chk.ratio;
        return static_cast<double>(btn.stats.peak_elements) /
               static_cast<double>(contract_ec(core, inputs).stats.peak_elements);
    };
    const double r50 = ratio_at(50), r100 = ratio_at(100);
    EXPECT_GE(r100 / r50, 1.8);
    EXPECT_LE(r100 / r50, 2.2);
}

TEST(CheckEstimate, BatchOnePeaksWithinFactorTwo) {
    const Mps core = random_mps({20, 3, 6, std::nullopt, 1});
    const auto inputs = oracle::random_inputs(1, 20, 3, 1, 2);
    const auto s = stack_mps(inputs);
    const double btn = static_cast<double>(contract_btn(core, s, plan_btn(core, s, PlanStrategy::SweepLR)).stats.peak_elements);
    const double ec = static_cast<double>(contract_ec(core, inputs).stats.peak_elements);
    EXPECT_LE(std::max(btn, ec) / std::min(btn, ec), 2.0);
}

TEST(CheckEstimate, BandEdges) {
    CostReport rep;
    rep.chain_elements = 100;
    EXPECT_TRUE(check_estimate(BatchStats{0.0, 50}, rep).passed);
    EXPECT_TRUE(check_estimate(BatchStats{0.0, 200}, rep).passed);
    EXPECT_FALSE(check_estimate(BatchStats{0.0, 49}, rep).passed);
    EXPECT_FALSE(check_estimate(BatchStats{0.0, 201}, rep).passed);
}
