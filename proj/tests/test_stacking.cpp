#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "oracles.hpp"
#include "tnstack/stacking.hpp"

using namespace tnstack;

namespace {

// Zero test written independently of off_block_magnitude: every entry whose
// row block differs from its column block must be exactly 0.0.
bool off_blocks_exactly_zero(const DenseTensor& site, std::size_t D) {
    if (site.rank() != 3) return true;
    for (std::size_t s = 0; s < site.extent(0); ++s)
        for (std::size_t r = 0; r < site.extent(1); ++r)
            for (std::size_t c = 0; c < site.extent(2); ++c) {
                const std::size_t cb = site.extent(2) == site.extent(1) ? c / D : c;  // last site: (D,1) blocks
                if (r / D != cb && site.at({s, r, c}) != 0.0) return false;
            }
    return true;
}

}  // namespace

TEST(StackMps, SingleInputAddsUnitStackLeg) {
    const Mps m = random_mps({3, 2, 2, std::nullopt, 1});
    const auto s = stack_mps({m});
    EXPECT_EQ(materialize_site(s, 0), m.unit(0).reshaped(Shape{2, 2}));
    EXPECT_EQ(materialize_site(s, 1), permute(m.unit(1), {1, 0, 2}));
    EXPECT_EQ(materialize_site(s, 2), permute(m.unit(2), {1, 0, 2}));
    EXPECT_EQ(s.site_shape(2), (Shape{2, 2, 1}));
}

TEST(StackMps, MiddleSiteOffBlocksAreZero) {
    const auto inputs = oracle::random_inputs(2, 3, 2, 2, 5);
    const auto site = materialize_site(stack_mps(inputs), 1);
    ASSERT_EQ(site.shape(), (Shape{2, 4, 4}));
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t c = 2; c < 4; ++c) {
                EXPECT_EQ(site.at({s, r, c}), 0.0);
                EXPECT_EQ(site.at({s, c, r}), 0.0);
            }
}

TEST(StackMps, FullContractionSlicesEqualInputs) {
    const auto inputs = oracle::random_inputs(3, 4, 2, 2, 6);
    const auto s = stack_mps(inputs);
    const auto full = contract_stacked_full(s);
    ASSERT_EQ(full.shape(), (Shape{2, 2, 2, 2, 3}));
    for (std::size_t b = 0; b < 3; ++b) {
        const auto want = oracle::full_tensor(inputs[b]);
        double dev = 0.0, scale = 0.0;
        for (std::size_t f = 0; f < want.size(); ++f) {
            dev = std::max(dev, std::abs(full[f * 3 + b] - want[f]));
            scale = std::max(scale, std::abs(want[f]));
        }
        EXPECT_LE(dev / scale, 1e-10) << "slice " << b;
    }
}

TEST(StackMps, Errors) {
    EXPECT_THROW(stack_mps({}), ArgumentError);
    const Mps a = random_mps({3, 2, 2, std::nullopt, 0});
    try {
        stack_mps({a, random_mps({3, 3, 2, std::nullopt, 0})});
        FAIL() << "expected StackingError";
    } catch (const StackingError& e) {
        EXPECT_NE(std::string(e.what()).find("site 0"), std::string::npos) << e.what();
    }
    EXPECT_THROW(stack_mps({a, random_mps({4, 2, 2, std::nullopt, 0})}), StackingError);
    EXPECT_THROW(stack_mps({random_mps({3, 2, 2, 4, 0})}), StackingError);
    EXPECT_THROW(stack_mps({a}, {5}), BoundsError);
}

TEST(MaterializeSite, DiagonalWhenBondIsOne) {
    const auto inputs = oracle::random_inputs(2, 3, 3, 1, 7);
    const auto site = materialize_site(stack_mps(inputs), 1);
    ASSERT_EQ(site.shape(), (Shape{3, 2, 2}));
    for (std::size_t s = 0; s < 3; ++s) {
        EXPECT_EQ(site.at({s, 0, 1}), 0.0);
        EXPECT_EQ(site.at({s, 1, 0}), 0.0);
        EXPECT_EQ(site.at({s, 0, 0}), inputs[0].unit(1).at({0, s, 0}));
        EXPECT_EQ(site.at({s, 1, 1}), inputs[1].unit(1).at({0, s, 0}));
    }
}

TEST(MaterializeSite, FirstSiteIsRowStack) {
    const auto inputs = oracle::random_inputs(4, 3, 2, 3, 8);
    const auto site = materialize_site(stack_mps(inputs), 0);
    EXPECT_EQ(site.shape(), (Shape{2, 12}));
    EXPECT_EQ(site, oracle::stacked_site(inputs, 0));
}

TEST(MaterializeSite, MatchesDefinitionEverywhere) {
    for (std::size_t L : {1u, 2u, 3u, 5u}) {
        const auto inputs = oracle::random_inputs(3, L, 2, 2, 9 + L);
        const auto s = stack_mps(inputs);
        for (std::size_t j = 0; j < L; ++j) {
            const auto dense = materialize_site(s, j);
            EXPECT_EQ(dense, oracle::stacked_site(inputs, j)) << "L=" << L << " site " << j;
            EXPECT_EQ(off_block_magnitude(s, j, dense), 0.0);
        }
    }
}

TEST(MaterializeSite, MiddleSiteElementCount) {
    const std::size_t B = 5, D = 3, k = 2;
    const auto s = stack_mps(oracle::random_inputs(B, 4, k, D, 1));
    EXPECT_EQ(materialize_site(s, 1).size(), k * (B * D) * (B * D));
}

TEST(OffBlockMagnitude, DetectsCorruption) {
    const auto inputs = oracle::random_inputs(2, 3, 2, 2, 10);
    const auto s = stack_mps(inputs);
    auto dense = materialize_site(s, 1);
    dense.set({0, 0, 3}, 0.5);
    EXPECT_EQ(off_block_magnitude(s, 1, dense), 0.5);
}

TEST(Unstack, RoundTripIsBitExact) {
    const auto inputs = oracle::random_inputs(4, 5, 3, 2, 11);
    const auto s = stack_mps(inputs);
    for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(unstack(s, b), inputs[b]);
}

TEST(StackGeneralUnits, IdentitySlicesGiveIdentity) {
    DenseTensor id{Shape{1, 2, 2}, {1, 0, 0, 1}};
    const std::vector<DenseTensor> units{id, id};
    const auto out = stack_general_units(units, false);
    ASSERT_EQ(out.shape(), (Shape{1, 4, 4}));
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(out.at({0, r, c}), r == c ? 1.0 : 0.0);
}

TEST(StackGeneralUnits, SingleUnitUnchanged) {
    std::mt19937_64 rng(1);
    const auto u = oracle::random_tensor(Shape{2, 3, 4, 2}, rng);
    const std::vector<DenseTensor> units{u};
    EXPECT_EQ(stack_general_units(units, false), u);
    EXPECT_EQ(stack_general_units(units, true), u.reshaped(Shape{2, 3, 4, 2, 1}));
}

TEST(StackGeneralUnits, VectorsMatchFirstSiteOfStack) {
    const auto inputs = oracle::random_inputs(3, 3, 2, 2, 12);
    std::vector<DenseTensor> vecs;
    for (const auto& m : inputs) vecs.push_back(m.unit(0).reshaped(Shape{2, 2}));
    EXPECT_EQ(stack_general_units(vecs, false), materialize_site(stack_mps(inputs), 0));
}

TEST(StackGeneralUnits, MatrixUnitsMatchMiddleSites) {
    const auto inputs = oracle::random_inputs(4, 4, 3, 2, 13);
    const auto s = stack_mps(inputs);
    for (std::size_t j = 1; j < 3; ++j) {
        std::vector<DenseTensor> mats;
        for (const auto& m : inputs) mats.push_back(permute(m.unit(j), {1, 0, 2}));
        EXPECT_EQ(stack_general_units(mats, false), materialize_site(s, j));
    }
}

TEST(StackGeneralUnits, HigherRankBlocksAndStackLeg) {
    std::mt19937_64 rng(2);
    std::vector<DenseTensor> units;
    for (int b = 0; b < 3; ++b) units.push_back(oracle::random_tensor(Shape{2, 2, 3, 2}, rng));
    const auto out = stack_general_units(units, true);
    ASSERT_EQ(out.shape(), (Shape{2, 6, 9, 6, 3}));
    for (std::size_t f = 0; f < out.size(); ++f) {
        const auto idx = oracle::unravel(f, {2, 6, 9, 6, 3});
        const std::size_t b0 = idx[1] / 2, b1 = idx[2] / 3, b2 = idx[3] / 2;
        const bool on_block = b0 == b1 && b1 == b2 && b2 == idx[4];
        const double want = on_block ? units[b0].at({idx[0], idx[1] % 2, idx[2] % 3, idx[3] % 2}) : 0.0;
        ASSERT_EQ(out[f], want) << "flat " << f;
    }
}

TEST(StackGeneralUnits, ShapeMismatch) {
    const std::vector<DenseTensor> units{DenseTensor{Shape{2, 2}}, DenseTensor{Shape{2, 3}}};
    EXPECT_THROW((void)stack_general_units(units, false), StackingError);
}

TEST(VerifyStackOracle, IdenticalCopies) {
    const Mps m = random_mps({4, 2, 2, std::nullopt, 3});
    const std::vector<Mps> inputs{m, m};
    const auto rep = verify_stack_oracle(inputs, stack_mps(inputs));
    EXPECT_TRUE(rep.passed);
    EXPECT_LE(rep.max_relative_deviation, 1e-12);
}

TEST(VerifyStackOracle, AllOnesChain) {
    const Mps ones({DenseTensor{Shape{1, 1, 1}, {1}}, DenseTensor{Shape{1, 1, 1}, {1}}});
    const std::vector<Mps> inputs{ones, ones};
    const auto full = contract_stacked_full(stack_mps(inputs));
    EXPECT_EQ(full, (DenseTensor{Shape{1, 1, 2}, {1, 1}}));
}

TEST(VerifyStackOracle, RandomPasses) {
    const auto inputs = oracle::random_inputs(4, 5, 2, 3, 14);
    const auto rep = verify_stack_oracle(inputs, stack_mps(inputs));
    EXPECT_TRUE(rep.passed);
    EXPECT_LE(rep.max_relative_deviation, 1e-10);
}

TEST(VerifyStackOracle, RefusesAboveCap) {
    const auto inputs = oracle::random_inputs(2, 8, 3, 1, 15);
    EXPECT_THROW((void)verify_stack_oracle(inputs, stack_mps(inputs), 100), OracleRefused);
}

TEST(StackPlacement, EveryPlacementReproducesInputs) {
    const auto inputs = oracle::random_inputs(3, 4, 2, 2, 16);
    for (std::size_t p = 0; p < 4; ++p) {
        const auto s = stack_mps(inputs, {p});
        EXPECT_EQ(s.site_shape(p).dims().back(), 3u);
        const auto rep = verify_stack_oracle(inputs, s);
        EXPECT_TRUE(rep.passed) << "placement " << p << " dev " << rep.max_relative_deviation;
    }
}

TEST(StackUnequalBonds, PrefixOffsetsAndOracle) {
    std::mt19937_64 rng(4);
    const Mps a({oracle::random_tensor(Shape{1, 2, 2}, rng), oracle::random_tensor(Shape{2, 2, 3}, rng),
                 oracle::random_tensor(Shape{3, 2, 1}, rng)});
    const Mps b({oracle::random_tensor(Shape{1, 2, 1}, rng), oracle::random_tensor(Shape{1, 2, 4}, rng),
                 oracle::random_tensor(Shape{4, 2, 1}, rng)});
    const std::vector<Mps> inputs{a, b};
    const auto s = stack_mps(inputs);
    EXPECT_EQ(s.bond_offsets(0), (std::vector<std::size_t>{0, 2, 3}));
    EXPECT_EQ(s.bond_offsets(1), (std::vector<std::size_t>{0, 3, 7}));
    EXPECT_EQ(s.site_shape(1), (Shape{2, 3, 7}));
    const auto site = materialize_site(s, 1);
    for (std::size_t sg = 0; sg < 2; ++sg)
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 7; ++c) {
                const bool in_a = r < 2 && c < 3, in_b = r == 2 && c >= 3;
                const double want = in_a ? a.unit(1).at({r, sg, c}) : in_b ? b.unit(1).at({0, sg, c - 3}) : 0.0;
                EXPECT_EQ(site.at({sg, r, c}), want);
            }
    EXPECT_TRUE(verify_stack_oracle(inputs, s).passed);
    EXPECT_EQ(unstack(s, 1), b);
}

TEST(DenseUnits, FormAValidMpsWithStackAsOutput) {
    const auto inputs = oracle::random_inputs(3, 4, 2, 2, 17);
    const auto units = dense_units(stack_mps(inputs));
    const Mps m(units);
    EXPECT_EQ(m.output_extent(), 3u);
    const auto full = oracle::full_tensor(m);
    for (std::size_t b = 0; b < 3; ++b) {
        const auto want = oracle::full_tensor(inputs[b]);
        for (std::size_t f = 0; f < want.size(); ++f) EXPECT_NEAR(full[f * 3 + b], want[f], 1e-12);
    }
}

// Property sweep: exact block-diagonality and oracle equality over random stacks.
TEST(StackProperty, BlockDiagonalAndOracle) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t B = 1 + rng() % 5, L = 1 + rng() % 5, D = 1 + rng() % 3, k = 2 + rng() % 2;
        const auto inputs = oracle::random_inputs(B, L, k, D, rng());
        const auto s = stack_mps(inputs);
        for (std::size_t j = 0; j < L; ++j) EXPECT_TRUE(off_blocks_exactly_zero(materialize_site(s, j), D));
        EXPECT_LE(verify_stack_oracle(inputs, s).max_relative_deviation, 1e-10);
    }
}
