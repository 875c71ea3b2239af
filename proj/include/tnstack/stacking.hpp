#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "tnstack/mps.hpp"
#include "tnstack/tensor.hpp"

namespace tnstack {

/// Which unit of the stacked network carries the extra extent-B leg.
/// An empty `site` means the last unit.
struct StackPlacement {
    std::optional<std::size_t> site;
};

/// B same-structure MPS merged into one batched MPS.
///
/// The batched network is kept block-sparse: only the B x L source units are
/// stored, and the dense block-diagonal site tensors are produced on demand by
/// materialize_site. Dense site j has axis order
///
///     (physical, [left bond], [right bond], [stack])
///
/// where the left bond is absent on site 0, the right bond is absent on the last
/// site, and the stack leg of extent B sits on the placement site. With the
/// default placement this gives (k, B*D) for site 0, (k, B*D, B*D) in the middle
/// and (k, B*D, B) for the last site, whose (D, 1) diagonal blocks absorb the
/// Kronecker-delta selectors of the stack leg.
///
/// Bond extents may differ between inputs; block offsets along each bond are
/// prefix sums of the per-input extents.
class StackedMps {
public:
    StackedMps(std::vector<Mps> inputs, StackPlacement placement) : inputs_(std::move(inputs)) {
        if (inputs_.empty()) throw ArgumentError("stack_mps: at least one input MPS is required");
        const Mps& ref = inputs_.front();
        const std::size_t L = ref.length();
        for (std::size_t b = 0; b < inputs_.size(); ++b) {
            const Mps& m = inputs_[b];
            if (m.has_output()) throw StackingError("stack_mps: input " + std::to_string(b) + " carries an output leg");
            if (m.length() != L)
                throw StackingError("stack_mps: input " + std::to_string(b) + " has " + std::to_string(m.length()) +
                                    " sites, input 0 has " + std::to_string(L));
            for (std::size_t j = 0; j < L; ++j)
                if (m.physical_extent(j) != ref.physical_extent(j))
                    throw StackingError("stack_mps: physical extent of input " + std::to_string(b) + " at site " +
                                        std::to_string(j) + " is " + std::to_string(m.physical_extent(j)) +
                                        ", input 0 has " + std::to_string(ref.physical_extent(j)));
        }
        stack_site_ = placement.site.value_or(L - 1);
        if (stack_site_ >= L)
            throw BoundsError("stack placement site " + std::to_string(stack_site_) + " outside chain of length " +
                              std::to_string(L));

        bond_offsets_.resize(L > 0 ? L - 1 : 0);
        for (std::size_t i = 0; i + 1 < L; ++i) {
            auto& off = bond_offsets_[i];
            off.assign(inputs_.size() + 1, 0);
            for (std::size_t b = 0; b < inputs_.size(); ++b) off[b + 1] = off[b] + inputs_[b].right_bond(i);
        }
    }

    [[nodiscard]] std::size_t batch() const noexcept { return inputs_.size(); }
    [[nodiscard]] std::size_t length() const noexcept { return inputs_.front().length(); }
    [[nodiscard]] std::size_t stack_site() const noexcept { return stack_site_; }
    [[nodiscard]] bool stack_on_last() const noexcept { return stack_site_ + 1 == length(); }
    [[nodiscard]] std::size_t physical_extent(std::size_t j) const { return inputs_.front().physical_extent(j); }

    [[nodiscard]] const Mps& source(std::size_t b) const { return inputs_.at(b); }
    [[nodiscard]] const DenseTensor& source_unit(std::size_t b, std::size_t j) const { return source(b).unit(j); }
    [[nodiscard]] const std::vector<Mps>& sources() const noexcept { return inputs_; }

    /// Prefix offsets of the B blocks along the bond between sites i and i+1 (size B+1).
    [[nodiscard]] const std::vector<std::size_t>& bond_offsets(std::size_t i) const { return bond_offsets_.at(i); }
    [[nodiscard]] std::size_t bond_extent(std::size_t i) const { return bond_offsets(i).back(); }

    [[nodiscard]] bool has_left(std::size_t j) const noexcept { return j > 0; }
    [[nodiscard]] bool has_right(std::size_t j) const noexcept { return j + 1 < length(); }
    [[nodiscard]] bool has_stack(std::size_t j) const noexcept { return j == stack_site_; }

    /// Dense shape of site j.
    [[nodiscard]] Shape site_shape(std::size_t j) const {
        if (j >= length()) throw BoundsError("site " + std::to_string(j) + " out of range");
        std::vector<std::size_t> dims{physical_extent(j)};
        if (has_left(j)) dims.push_back(bond_extent(j - 1));
        if (has_right(j)) dims.push_back(bond_extent(j));
        if (has_stack(j)) dims.push_back(batch());
        return Shape(dims);
    }

    [[nodiscard]] std::vector<Shape> site_shapes() const {
        std::vector<Shape> out;
        for (std::size_t j = 0; j < length(); ++j) out.push_back(site_shape(j));
        return out;
    }

private:
    std::vector<Mps> inputs_;
    std::size_t stack_site_ = 0;
    std::vector<std::vector<std::size_t>> bond_offsets_;
};

inline StackedMps stack_mps(std::vector<Mps> inputs, StackPlacement placement = {}) {
    return StackedMps(std::move(inputs), placement);
}

/// Dense block-diagonal tensor of site j. Only the diagonal blocks are written.
inline DenseTensor materialize_site(const StackedMps& s, std::size_t j) {
    DenseTensor out{s.site_shape(j)};
    const std::size_t k = s.physical_extent(j);
    const std::size_t rows = s.has_left(j) ? s.bond_extent(j - 1) : 1;
    const std::size_t cols = s.has_right(j) ? s.bond_extent(j) : 1;
    const std::size_t legs = s.has_stack(j) ? s.batch() : 1;
    auto dense = out.data();
    for (std::size_t b = 0; b < s.batch(); ++b) {
        const DenseTensor& u = s.source_unit(b, j);
        const std::size_t dl = u.extent(0), dr = u.extent(2);
        const std::size_t row0 = s.has_left(j) ? s.bond_offsets(j - 1)[b] : 0;
        const std::size_t col0 = s.has_right(j) ? s.bond_offsets(j)[b] : 0;
        const std::size_t leg = s.has_stack(j) ? b : 0;
        for (std::size_t l = 0; l < dl; ++l)
            for (std::size_t sigma = 0; sigma < k; ++sigma)
                for (std::size_t r = 0; r < dr; ++r) {
                    const std::size_t flat = ((sigma * rows + row0 + l) * cols + col0 + r) * legs + leg;
                    dense[flat] = u[(l * k + sigma) * dr + r];
                }
    }
    return out;
}

/// Sum of |entries| of a dense site tensor that lie outside the diagonal blocks.
/// Zero for every correctly stacked site.
inline double off_block_magnitude(const StackedMps& s, std::size_t j, const DenseTensor& dense) {
    if (!(dense.shape() == s.site_shape(j)))
        throw DimensionError("site " + std::to_string(j) + " should have shape " + s.site_shape(j).to_string() +
                             ", got " + dense.shape().to_string());
    auto block_of = [](const std::vector<std::size_t>& off, std::size_t pos) {
        return static_cast<std::size_t>(std::upper_bound(off.begin(), off.end(), pos) - off.begin()) - 1;
    };
    const std::size_t k = s.physical_extent(j);
    const std::size_t rows = s.has_left(j) ? s.bond_extent(j - 1) : 1;
    const std::size_t cols = s.has_right(j) ? s.bond_extent(j) : 1;
    const std::size_t legs = s.has_stack(j) ? s.batch() : 1;
    double total = 0.0;
    std::size_t flat = 0;
    for (std::size_t sigma = 0; sigma < k; ++sigma)
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
                for (std::size_t t = 0; t < legs; ++t, ++flat) {
                    std::optional<std::size_t> block;
                    bool inside = true;
                    auto agree = [&](std::size_t id) {
                        if (block && *block != id) inside = false;
                        block = id;
                    };
                    if (s.has_left(j)) agree(block_of(s.bond_offsets(j - 1), r));
                    if (s.has_right(j)) agree(block_of(s.bond_offsets(j), c));
                    if (s.has_stack(j)) agree(t);
                    if (!inside) total += std::abs(dense[flat]);
                }
    return total;
}

/// Reads block b of every dense site back into an MPS.
inline Mps unstack(const StackedMps& s, std::size_t b) {
    if (b >= s.batch()) throw BoundsError("unstack: batch index " + std::to_string(b) + " out of range");
    std::vector<DenseTensor> units;
    for (std::size_t j = 0; j < s.length(); ++j) {
        const DenseTensor dense = materialize_site(s, j);
        const std::size_t k = s.physical_extent(j);
        const std::size_t rows = s.has_left(j) ? s.bond_extent(j - 1) : 1;
        const std::size_t cols = s.has_right(j) ? s.bond_extent(j) : 1;
        const std::size_t legs = s.has_stack(j) ? s.batch() : 1;
        const std::size_t row0 = s.has_left(j) ? s.bond_offsets(j - 1)[b] : 0;
        const std::size_t col0 = s.has_right(j) ? s.bond_offsets(j)[b] : 0;
        const std::size_t dl = s.has_left(j) ? s.bond_offsets(j - 1)[b + 1] - row0 : 1;
        const std::size_t dr = s.has_right(j) ? s.bond_offsets(j)[b + 1] - col0 : 1;
        const std::size_t leg = s.has_stack(j) ? b : 0;
        DenseTensor u{Shape{dl, k, dr}};
        for (std::size_t l = 0; l < dl; ++l)
            for (std::size_t sigma = 0; sigma < k; ++sigma)
                for (std::size_t r = 0; r < dr; ++r)
                    u[(l * k + sigma) * dr + r] = dense[((sigma * rows + row0 + l) * cols + col0 + r) * legs + leg];
        units.push_back(std::move(u));
    }
    return Mps(std::move(units));
}

/// Dense sites rearranged into MPS unit order (left, physical, right, [stack]),
/// with extent-1 legs filled in at the open ends. With the stack leg on the last
/// site the result is an ordinary MPS whose output leg is the batch index.
inline std::vector<DenseTensor> dense_units(const StackedMps& s) {
    std::vector<DenseTensor> units;
    for (std::size_t j = 0; j < s.length(); ++j) {
        DenseTensor dense = materialize_site(s, j);
        const std::size_t k = s.physical_extent(j);
        const std::size_t rows = s.has_left(j) ? s.bond_extent(j - 1) : 1;
        const std::size_t cols = s.has_right(j) ? s.bond_extent(j) : 1;
        const bool stack = s.has_stack(j);
        DenseTensor full = stack ? std::move(dense).reshaped(Shape{k, rows, cols, s.batch()})
                                 : std::move(dense).reshaped(Shape{k, rows, cols});
        units.push_back(stack ? permute(full, {1, 0, 2, 3}) : permute(full, {1, 0, 2}));
    }
    return units;
}

/// Stacked version of an arbitrary tensor-network unit.
///
/// Each of the B units has shape (k, L_1, ..., L_m). The result has shape
/// (k, B*L_1, ..., B*L_m), plus a trailing B axis when `add_stack_leg` is set,
/// and for every physical index its j-th diagonal hyper-block holds unit j.
inline DenseTensor stack_general_units(std::span<const DenseTensor> units, bool add_stack_leg) {
    if (units.empty()) throw ArgumentError("stack_general_units: at least one unit is required");
    const Shape& ref = units.front().shape();
    if (ref.rank() < 2)
        throw StackingError("stack_general_units: units need a physical axis and at least one bond axis, got " +
                            ref.to_string());
    for (std::size_t b = 1; b < units.size(); ++b)
        if (!(units[b].shape() == ref))
            throw StackingError("stack_general_units: unit " + std::to_string(b) + " has shape " +
                                units[b].shape().to_string() + ", unit 0 has " + ref.to_string());

    const std::size_t n = units.size();
    const std::size_t m = ref.rank() - 1;
    std::vector<std::size_t> dims{ref[0]};
    for (std::size_t a = 1; a <= m; ++a) dims.push_back(n * ref[a]);
    if (add_stack_leg) dims.push_back(n);
    DenseTensor out{Shape(dims)};

    std::vector<std::size_t> out_idx(dims.size());
    std::vector<std::size_t> in_idx(ref.rank(), 0);
    for (std::size_t b = 0; b < n; ++b) {
        const auto src = units[b].data();
        std::fill(in_idx.begin(), in_idx.end(), 0);
        for (std::size_t flat = 0; flat < src.size(); ++flat) {
            out_idx[0] = in_idx[0];
            for (std::size_t a = 1; a <= m; ++a) out_idx[a] = b * ref[a] + in_idx[a];
            if (add_stack_leg) out_idx.back() = b;
            out.set(out_idx, src[flat]);
            for (std::size_t a = ref.rank(); a-- > 0;) {
                if (++in_idx[a] < ref[a]) break;
                in_idx[a] = 0;
            }
        }
    }
    return out;
}

/// Contracts the dense stacked network completely. Result axes: the physical
/// axes of every site in order, then the stack axis.
inline DenseTensor contract_stacked_full(const StackedMps& s, std::size_t cap = kDefaultOracleCap) {
    std::size_t count = s.batch();
    for (std::size_t j = 0; j < s.length(); ++j) {
        count *= s.physical_extent(j);
        if (count > cap) break;
    }
    if (count > cap)
        throw OracleRefused("stacked full tensor would exceed the oracle cap of " + std::to_string(cap) +
                            " elements");

    std::vector<DenseTensor> sites;
    std::vector<AxisPair> wiring;
    for (std::size_t j = 0; j < s.length(); ++j) sites.push_back(materialize_site(s, j));
    for (std::size_t j = 0; j + 1 < s.length(); ++j) {
        const std::size_t right_axis = s.has_left(j) ? 2 : 1;
        wiring.push_back({j, right_axis, j + 1, 1});
    }
    DenseTensor full = full_contract(sites, wiring);

    // full_contract orders free axes by site, so the stack axis follows the
    // physical axis of the placement site; move it to the end.
    const std::size_t r = full.rank();
    const std::size_t stack_axis = s.stack_site() + 1;
    if (stack_axis == r - 1) return full;
    std::vector<std::size_t> perm;
    for (std::size_t a = 0; a < r; ++a)
        if (a != stack_axis) perm.push_back(a);
    perm.push_back(stack_axis);
    return permute(full, perm);
}

struct StackVerification {
    double max_relative_deviation = 0.0;
    bool passed = false;
};

inline constexpr double kStackTolerance = 1e-10;

/// Compares the full contraction of `s` slice by slice against the full tensor
/// of each input.
inline StackVerification verify_stack_oracle(std::span<const Mps> inputs, const StackedMps& s,
                                             std::size_t cap = kDefaultOracleCap) {
    if (inputs.size() != s.batch())
        throw ArgumentError("verify_stack_oracle: " + std::to_string(inputs.size()) + " inputs for a batch of " +
                            std::to_string(s.batch()));
    const DenseTensor stacked = contract_stacked_full(s, cap);
    const std::size_t B = s.batch();
    const std::size_t slice = stacked.size() / B;
    StackVerification report;
    for (std::size_t b = 0; b < B; ++b) {
        const DenseTensor expected = mps_to_full_tensor(inputs[b], cap);
        if (expected.size() != slice)
            throw DimensionError("verify_stack_oracle: input " + std::to_string(b) + " does not match the stack");
        DenseTensor got{expected.shape()};
        for (std::size_t i = 0; i < slice; ++i) got[i] = stacked[i * B + b];
        report.max_relative_deviation = std::max(report.max_relative_deviation, max_relative_deviation(got, expected));
    }
    report.passed = report.max_relative_deviation <= kStackTolerance;
    return report;
}

}  // namespace tnstack
