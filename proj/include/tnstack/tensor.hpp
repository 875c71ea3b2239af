#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tnstack/error.hpp"

namespace tnstack {

/// Ordered list of extents. A rank-0 shape describes a scalar.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate(); }
    explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate(); }

    [[nodiscard]] std::size_t rank() const noexcept { return dims_.size(); }
    [[nodiscard]] std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
    [[nodiscard]] const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    [[nodiscard]] std::size_t element_count() const noexcept { return count_; }

    [[nodiscard]] std::string to_string() const {
        std::string s = "(";
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(dims_[i]);
        }
        if (dims_.size() == 1) s += ",";
        return s + ")";
    }

    friend bool operator==(const Shape& a, const Shape& b) noexcept { return a.dims_ == b.dims_; }

private:
    void validate() {
        std::size_t count = 1;
        for (std::size_t d : dims_) {
            if (d == 0) throw DimensionError("shape extents must be >= 1, got " + to_string());
            if (count > std::numeric_limits<std::size_t>::max() / d)
                throw DimensionError("element count of " + to_string() + " overflows");
            count *= d;
        }
        count_ = count;
    }

    std::vector<std::size_t> dims_;
    std::size_t count_ = 1;
};

/// Dense rank-k array of doubles in row-major order (last index fastest).
class DenseTensor {
public:
    DenseTensor() : data_(1, 0.0) {}
    explicit DenseTensor(Shape shape) : shape_(std::move(shape)), data_(shape_.element_count(), 0.0) {}
    DenseTensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_.element_count())
            throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                                 shape_.to_string());
    }

    static DenseTensor scalar(double v) { return DenseTensor(Shape{}, {v}); }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.rank(); }
    [[nodiscard]] std::size_t extent(std::size_t axis) const { return shape_[axis]; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] std::span<double> data() noexcept { return data_; }

    [[nodiscard]] double operator[](std::size_t flat) const noexcept { return data_[flat]; }
    [[nodiscard]] double& operator[](std::size_t flat) noexcept { return data_[flat]; }

    [[nodiscard]] std::size_t offset(std::span<const std::size_t> index) const {
        if (index.size() != rank())
            throw BoundsError("index of rank " + std::to_string(index.size()) + " used on tensor of shape " +
                              shape_.to_string());
        std::size_t off = 0;
        for (std::size_t a = 0; a < index.size(); ++a) {
            if (index[a] >= shape_[a])
                throw BoundsError("index " + std::to_string(index[a]) + " out of range on axis " + std::to_string(a) +
                                  " of shape " + shape_.to_string());
            off = off * shape_[a] + index[a];
        }
        return off;
    }
    [[nodiscard]] std::size_t offset(std::initializer_list<std::size_t> index) const {
        return offset(std::span<const std::size_t>(index.begin(), index.size()));
    }

    [[nodiscard]] double at(std::span<const std::size_t> index) const { return data_[offset(index)]; }
    [[nodiscard]] double at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }
    void set(std::span<const std::size_t> index, double v) { data_[offset(index)] = v; }
    void set(std::initializer_list<std::size_t> index, double v) { data_[offset(index)] = v; }

    /// Same data under a new shape with the same element count.
    [[nodiscard]] DenseTensor reshaped(Shape shape) const& { return DenseTensor(std::move(shape), data_); }
    [[nodiscard]] DenseTensor reshaped(Shape shape) && { return DenseTensor(std::move(shape), std::move(data_)); }

    [[nodiscard]] DenseTensor scaled(double alpha) const {
        DenseTensor out = *this;
        for (double& v : out.data_) v *= alpha;
        return out;
    }

    friend bool operator==(const DenseTensor& a, const DenseTensor& b) noexcept {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

namespace detail {

// C[M,N] += A[M,K] * B[K,N], every C entry accumulating over p in ascending order.
inline void gemm_accumulate(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                            std::size_t n) noexcept {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline bool is_identity(std::span<const std::size_t> perm) noexcept {
    for (std::size_t i = 0; i < perm.size(); ++i)
        if (perm[i] != i) return false;
    return true;
}

}  // namespace detail

/// Axis permutation: output axis i is input axis perm[i].
inline DenseTensor permute(const DenseTensor& t, std::span<const std::size_t> perm) {
    const std::size_t r = t.rank();
    if (perm.size() != r) throw BoundsError("permutation length does not match tensor rank");
    std::vector<bool> seen(r, false);
    for (std::size_t p : perm) {
        if (p >= r || seen[p]) throw BoundsError("invalid axis permutation");
        seen[p] = true;
    }
    if (detail::is_identity(perm)) return t;

    std::vector<std::size_t> in_strides(r, 1);
    for (std::size_t a = r; a-- > 1;) in_strides[a - 1] = in_strides[a] * t.extent(a);

    std::vector<std::size_t> out_dims(r), strides(r);
    for (std::size_t i = 0; i < r; ++i) {
        out_dims[i] = t.extent(perm[i]);
        strides[i] = in_strides[perm[i]];
    }
    DenseTensor out{Shape(out_dims)};
    auto src = t.data();
    auto dst = out.data();

    // Odometer over the output, innermost axis handled as a strided run.
    const std::size_t inner = out_dims[r - 1];
    const std::size_t inner_stride = strides[r - 1];
    std::vector<std::size_t> idx(r, 0);
    std::size_t src_off = 0;
    for (std::size_t pos = 0; pos < dst.size(); pos += inner) {
        for (std::size_t j = 0; j < inner; ++j) dst[pos + j] = src[src_off + j * inner_stride];
        for (std::size_t a = r - 1; a-- > 0;) {
            if (++idx[a] < out_dims[a]) {
                src_off += strides[a];
                break;
            }
            src_off -= (out_dims[a] - 1) * strides[a];
            idx[a] = 0;
        }
    }
    return out;
}

inline DenseTensor permute(const DenseTensor& t, std::initializer_list<std::size_t> perm) {
    return permute(t, std::span<const std::size_t>(perm.begin(), perm.size()));
}

/// Contracts a_axes[i] of `a` with b_axes[i] of `b`. The result carries the free
/// axes of `a` in order followed by the free axes of `b`.
inline DenseTensor contract_pair(const DenseTensor& a, std::span<const std::size_t> a_axes, const DenseTensor& b,
                                 std::span<const std::size_t> b_axes) {
    if (a_axes.size() != b_axes.size())
        throw DimensionError("contract_pair: " + std::to_string(a_axes.size()) + " axes of a paired with " +
                             std::to_string(b_axes.size()) + " axes of b");

    auto check_side = [](const DenseTensor& t, std::span<const std::size_t> axes, const char* name) {
        std::vector<bool> used(t.rank(), false);
        for (std::size_t ax : axes) {
            if (ax >= t.rank())
                throw BoundsError(std::string("contract_pair: axis ") + std::to_string(ax) + " of " + name +
                                  " out of range for rank " + std::to_string(t.rank()));
            if (used[ax])
                throw DimensionError(std::string("contract_pair: axis ") + std::to_string(ax) + " of " + name +
                                     " paired twice");
            used[ax] = true;
        }
        return used;
    };
    const auto used_a = check_side(a, a_axes, "a");
    const auto used_b = check_side(b, b_axes, "b");

    std::size_t k = 1;
    for (std::size_t i = 0; i < a_axes.size(); ++i) {
        if (a.extent(a_axes[i]) != b.extent(b_axes[i]))
            throw DimensionError("contract_pair: a.axis" + std::to_string(a_axes[i]) + " (extent " +
                                 std::to_string(a.extent(a_axes[i])) + ") does not match b.axis" +
                                 std::to_string(b_axes[i]) + " (extent " + std::to_string(b.extent(b_axes[i])) +
                                 ")");
        k *= a.extent(a_axes[i]);
    }

    std::vector<std::size_t> perm_a, perm_b, out_dims;
    std::size_t m = 1, n = 1;
    for (std::size_t ax = 0; ax < a.rank(); ++ax)
        if (!used_a[ax]) {
            perm_a.push_back(ax);
            out_dims.push_back(a.extent(ax));
            m *= a.extent(ax);
        }
    perm_a.insert(perm_a.end(), a_axes.begin(), a_axes.end());
    perm_b.assign(b_axes.begin(), b_axes.end());
    for (std::size_t ax = 0; ax < b.rank(); ++ax)
        if (!used_b[ax]) {
            perm_b.push_back(ax);
            out_dims.push_back(b.extent(ax));
            n *= b.extent(ax);
        }

    // Only copy operands whose axes are not already in (free, contracted) order.
    DenseTensor a_perm, b_perm;
    const DenseTensor* ap = &a;
    const DenseTensor* bp = &b;
    if (!detail::is_identity(perm_a)) {
        a_perm = permute(a, perm_a);
        ap = &a_perm;
    }
    if (!detail::is_identity(perm_b)) {
        b_perm = permute(b, perm_b);
        bp = &b_perm;
    }

    DenseTensor out{Shape(out_dims)};
    detail::gemm_accumulate(ap->data().data(), bp->data().data(), out.data().data(), m, k, n);
    return out;
}

inline DenseTensor contract_pair(const DenseTensor& a, std::initializer_list<std::size_t> a_axes,
                                 const DenseTensor& b, std::initializer_list<std::size_t> b_axes) {
    return contract_pair(a, std::span<const std::size_t>(a_axes.begin(), a_axes.size()), b,
                         std::span<const std::size_t>(b_axes.begin(), b_axes.size()));
}

/// (B,m,n) x (B,n,p) -> (B,m,p), slice by slice.
inline DenseTensor batched_matmul(const DenseTensor& a, const DenseTensor& b) {
    if (a.rank() != 3 || b.rank() != 3)
        throw DimensionError("batched_matmul expects rank-3 operands, got " + a.shape().to_string() + " and " +
                             b.shape().to_string());
    const std::size_t batch = a.extent(0);
    if (b.extent(0) != batch)
        throw DimensionError("batched_matmul: batch extents " + std::to_string(batch) + " and " +
                             std::to_string(b.extent(0)) + " differ");
    const std::size_t m = a.extent(1), k = a.extent(2), n = b.extent(2);
    if (b.extent(1) != k)
        throw DimensionError("batched_matmul: inner extents " + std::to_string(k) + " and " +
                             std::to_string(b.extent(1)) + " differ");
    DenseTensor out{Shape{batch, m, n}};
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* od = out.data().data();
    for (std::size_t s = 0; s < batch; ++s)
        detail::gemm_accumulate(ad + s * m * k, bd + s * k * n, od + s * m * n, m, k, n);
    return out;
}

/// One contracted bond of a network: axis `axis_a` of unit `unit_a` with axis `axis_b` of unit `unit_b`.
struct AxisPair {
    std::size_t unit_a;
    std::size_t axis_a;
    std::size_t unit_b;
    std::size_t axis_b;
};

/// Contracts a whole network by processing the wiring in list order. When a pair
/// joins two separate groups, every other pending pair between those groups is
/// contracted in the same step. The free axes of the result are ordered by
/// (unit index, axis index).
inline DenseTensor full_contract(std::span<const DenseTensor> units, std::span<const AxisPair> wiring) {
    if (units.empty()) throw WiringError("full_contract: no units");

    std::vector<std::vector<bool>> used(units.size());
    for (std::size_t u = 0; u < units.size(); ++u) used[u].assign(units[u].rank(), false);
    auto claim = [&](std::size_t unit, std::size_t axis, std::size_t pair_index) {
        if (unit >= units.size())
            throw WiringError("wiring pair " + std::to_string(pair_index) + " references missing unit " +
                              std::to_string(unit));
        if (axis >= units[unit].rank())
            throw WiringError("wiring pair " + std::to_string(pair_index) + " references missing axis " +
                              std::to_string(axis) + " of unit " + std::to_string(unit));
        if (used[unit][axis])
            throw WiringError("axis " + std::to_string(axis) + " of unit " + std::to_string(unit) +
                              " is wired more than once");
        used[unit][axis] = true;
    };
    for (std::size_t i = 0; i < wiring.size(); ++i) {
        const auto& w = wiring[i];
        claim(w.unit_a, w.axis_a, i);
        claim(w.unit_b, w.axis_b, i);
        if (w.unit_a == w.unit_b)
            throw WiringError("wiring pair " + std::to_string(i) + " connects unit " + std::to_string(w.unit_a) +
                              " to itself");
    }

    using Leg = std::pair<std::size_t, std::size_t>;  // (unit, axis)
    struct Group {
        DenseTensor tensor;
        std::vector<Leg> legs;
    };
    std::vector<Group> groups;
    std::vector<std::size_t> group_of(units.size());
    for (std::size_t u = 0; u < units.size(); ++u) {
        Group g{units[u], {}};
        for (std::size_t ax = 0; ax < units[u].rank(); ++ax) g.legs.emplace_back(u, ax);
        groups.push_back(std::move(g));
        group_of[u] = u;
    }

    std::vector<bool> done(wiring.size(), false);
    for (std::size_t i = 0; i < wiring.size(); ++i) {
        if (done[i]) continue;
        const std::size_t ga = group_of[wiring[i].unit_a];
        const std::size_t gb = group_of[wiring[i].unit_b];
        auto position = [](const Group& g, Leg leg) {
            return static_cast<std::size_t>(std::find(g.legs.begin(), g.legs.end(), leg) - g.legs.begin());
        };
        std::vector<std::size_t> axes_a, axes_b;
        for (std::size_t j = i; j < wiring.size(); ++j) {
            if (done[j]) continue;
            const auto& w = wiring[j];
            const std::size_t wa = group_of[w.unit_a], wb = group_of[w.unit_b];
            if (wa == ga && wb == gb) {
                axes_a.push_back(position(groups[ga], {w.unit_a, w.axis_a}));
                axes_b.push_back(position(groups[gb], {w.unit_b, w.axis_b}));
            } else if (wa == gb && wb == ga) {
                axes_a.push_back(position(groups[ga], {w.unit_b, w.axis_b}));
                axes_b.push_back(position(groups[gb], {w.unit_a, w.axis_a}));
            } else {
                continue;
            }
            done[j] = true;
        }
        Group merged;
        merged.tensor = contract_pair(groups[ga].tensor, axes_a, groups[gb].tensor, axes_b);
        for (std::size_t p = 0; p < groups[ga].legs.size(); ++p)
            if (std::find(axes_a.begin(), axes_a.end(), p) == axes_a.end()) merged.legs.push_back(groups[ga].legs[p]);
        for (std::size_t p = 0; p < groups[gb].legs.size(); ++p)
            if (std::find(axes_b.begin(), axes_b.end(), p) == axes_b.end()) merged.legs.push_back(groups[gb].legs[p]);
        groups[ga] = std::move(merged);
        groups[gb] = Group{};
        for (auto& g : group_of)
            if (g == gb) g = ga;
    }

    const std::size_t root = group_of[0];
    for (std::size_t g : group_of)
        if (g != root) throw WiringError("full_contract: wiring does not connect all units");

    const Group& final_group = groups[root];
    std::vector<std::size_t> order(final_group.legs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return final_group.legs[x] < final_group.legs[y]; });
    if (order.empty()) return final_group.tensor;
    return permute(final_group.tensor, order);
}

/// max|a-b| / max(max|a|, max|b|); zero when both tensors vanish.
inline double max_relative_deviation(const DenseTensor& a, const DenseTensor& b) {
    if (!(a.shape() == b.shape()))
        throw DimensionError("cannot compare tensors of shape " + a.shape().to_string() + " and " +
                             b.shape().to_string());
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    if (scale == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return diff / scale;
}

}  // namespace tnstack
