#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tnstack/meter.hpp"
#include "tnstack/tensor.hpp"

namespace tnstack {

/// Generator parameters for a uniform-bond open-boundary MPS.
struct MpsSpec {
    std::size_t L = 1;       ///< sites
    std::size_t k = 2;       ///< physical extent
    std::size_t bond = 1;    ///< auxiliary extent (V for a core, D for an input)
    std::optional<std::size_t> output;  ///< extent O of an output leg on the last unit
    std::uint64_t seed = 0;
};

/// Open-boundary matrix product state.
///
/// Units are rank-3 tensors with axis order (left bond, physical, right bond).
/// The outer bonds of the chain have extent 1. When the MPS carries an output
/// leg, the last unit is rank-4: (left bond, physical, 1, output).
class Mps {
public:
    explicit Mps(std::vector<DenseTensor> units) : units_(std::move(units)) { validate(); }

    [[nodiscard]] std::size_t length() const noexcept { return units_.size(); }
    [[nodiscard]] const DenseTensor& unit(std::size_t j) const { return units_.at(j); }
    [[nodiscard]] const std::vector<DenseTensor>& units() const noexcept { return units_; }

    [[nodiscard]] std::size_t physical_extent(std::size_t j) const { return unit(j).extent(1); }
    [[nodiscard]] std::size_t left_bond(std::size_t j) const { return unit(j).extent(0); }
    [[nodiscard]] std::size_t right_bond(std::size_t j) const { return unit(j).extent(2); }

    [[nodiscard]] bool has_output() const noexcept { return units_.back().rank() == 4; }
    [[nodiscard]] std::size_t output_extent() const noexcept {
        return has_output() ? units_.back().extent(3) : 1;
    }

    /// Copy of this MPS with unit `j` multiplied by alpha.
    [[nodiscard]] Mps with_scaled_unit(std::size_t j, double alpha) const {
        auto units = units_;
        units.at(j) = units[j].scaled(alpha);
        return Mps(std::move(units));
    }

    friend bool operator==(const Mps& a, const Mps& b) noexcept { return a.units_ == b.units_; }

private:
    void validate() const {
        if (units_.empty()) throw ShapeError("an MPS needs at least one unit");
        const std::size_t last = units_.size() - 1;
        for (std::size_t j = 0; j <= last; ++j) {
            const auto& u = units_[j];
            const bool rank_ok = u.rank() == 3 || (j == last && u.rank() == 4);
            if (!rank_ok)
                throw ShapeError("MPS unit " + std::to_string(j) + " has shape " + u.shape().to_string() +
                                 "; expected (left, physical, right)");
            if (u.rank() == 4 && u.extent(2) != 1)
                throw ShapeError("output-carrying last unit must have right bond 1, got " + u.shape().to_string());
            if (j > 0 && units_[j - 1].extent(2) != u.extent(0))
                throw ShapeError("bond mismatch between units " + std::to_string(j - 1) + " and " +
                                 std::to_string(j) + ": " + std::to_string(units_[j - 1].extent(2)) + " vs " +
                                 std::to_string(u.extent(0)));
        }
        if (units_.front().extent(0) != 1)
            throw ShapeError("first unit must have left bond 1 (open boundary)");
        if (units_.back().extent(2) != 1) throw ShapeError("last unit must have right bond 1 (open boundary)");
    }

    std::vector<DenseTensor> units_;
};

namespace detail {

// Uniform on [-1, 1) from the top 53 bits; independent of the standard
// library's distribution implementations so seeds are portable.
inline double uniform_pm1(std::mt19937_64& rng) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return 2.0 * u - 1.0;
}

}  // namespace detail

inline Mps random_mps(const MpsSpec& spec) {
    if (spec.L == 0 || spec.k == 0 || spec.bond == 0 || (spec.output && *spec.output == 0))
        throw ArgumentError("MpsSpec extents must all be >= 1");
    std::mt19937_64 rng(spec.seed);
    std::vector<DenseTensor> units;
    units.reserve(spec.L);
    for (std::size_t j = 0; j < spec.L; ++j) {
        const std::size_t left = j == 0 ? 1 : spec.bond;
        const std::size_t right = j + 1 == spec.L ? 1 : spec.bond;
        Shape shape = (j + 1 == spec.L && spec.output) ? Shape{left, spec.k, right, *spec.output}
                                                       : Shape{left, spec.k, right};
        DenseTensor t{shape};
        for (double& v : t.data()) v = detail::uniform_pm1(rng);
        units.push_back(std::move(t));
    }
    return Mps(std::move(units));
}

inline constexpr std::size_t kDefaultOracleCap = 10'000'000;

/// Contracts every auxiliary bond and returns the rank-L tensor (k_0, ..., k_{L-1})
/// with a trailing output axis when the MPS has one.
inline DenseTensor mps_to_full_tensor(const Mps& m, std::size_t cap = kDefaultOracleCap) {
    std::vector<std::size_t> dims;
    std::size_t count = 1;
    for (std::size_t j = 0; j < m.length(); ++j) {
        dims.push_back(m.physical_extent(j));
        count *= m.physical_extent(j);
        if (count > cap) break;
    }
    if (m.has_output()) {
        dims.push_back(m.output_extent());
        count *= m.output_extent();
    }
    if (count > cap)
        throw OracleRefused("full tensor would exceed the oracle cap of " + std::to_string(cap) + " elements");

    const auto& first = m.unit(0);
    std::vector<std::size_t> acc_dims(first.shape().dims().begin() + 1, first.shape().dims().end());
    DenseTensor acc = first.reshaped(Shape(acc_dims));
    for (std::size_t j = 1; j < m.length(); ++j) {
        const std::size_t last_axis = acc.rank() - 1;
        acc = contract_pair(acc, {last_axis}, m.unit(j), {0});
    }
    return std::move(acc).reshaped(Shape(dims));
}

namespace detail {

inline void check_inner_product_shapes(const Mps& core, const Mps& input) {
    if (core.length() != input.length())
        throw ShapeError("inner_product: core has " + std::to_string(core.length()) + " sites, input has " +
                         std::to_string(input.length()));
    if (input.has_output()) throw ShapeError("inner_product: input MPS must not carry an output leg");
    for (std::size_t j = 0; j < core.length(); ++j)
        if (core.physical_extent(j) != input.physical_extent(j))
            throw ShapeError("inner_product: physical extent mismatch at site " + std::to_string(j) + ": " +
                             std::to_string(core.physical_extent(j)) + " vs " +
                             std::to_string(input.physical_extent(j)));
}

inline DenseTensor inner_product_metered(const Mps& core, const Mps& input, ElementMeter* meter) {
    check_inner_product_shapes(core, input);
    auto acquire = [meter](const DenseTensor& t) {
        if (meter) meter->acquire(t.size());
    };
    auto release = [meter](const DenseTensor& t) {
        if (meter) meter->release(t.size());
    };

    // env axes: (core bond, input bond)
    DenseTensor env{Shape{1, 1}, {1.0}};
    acquire(env);
    for (std::size_t j = 0; j < core.length(); ++j) {
        const auto& c = core.unit(j);
        // (Vl, Vr, [O], Dl, Dr)
        const DenseTensor site = contract_pair(c, {1}, input.unit(j), {1});
        acquire(site);
        const std::size_t dl_axis = c.rank() - 1;
        // (Vr, [O], Dr)
        DenseTensor next = contract_pair(env, {0, 1}, site, {0, dl_axis});
        acquire(next);
        release(site);
        release(env);
        env = std::move(next);
    }
    release(env);
    if (core.has_output()) return std::move(env).reshaped(Shape{core.output_extent()});
    return std::move(env).reshaped(Shape{});
}

}  // namespace detail

/// <core|input>: contracts each site's physical pair, then sweeps left to right.
/// Returns a scalar, or a (O,) vector when the core carries an output leg.
inline DenseTensor inner_product(const Mps& core, const Mps& input) {
    return detail::inner_product_metered(core, input, nullptr);
}

}  // namespace tnstack
