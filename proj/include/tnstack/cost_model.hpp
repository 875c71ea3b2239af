#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "tnstack/engines.hpp"
#include "tnstack/error.hpp"

namespace tnstack {

/// Sizes entering the memory formulas. All extents are >= 1.
struct CostParams {
    std::uint64_t L = 2;
    std::uint64_t B = 1;
    std::uint64_t V = 1;
    std::uint64_t D = 1;
    std::uint64_t O = 1;
    std::uint64_t k = 1;
};

/// Element counts of the physically contracted chain and of the sweep
/// intermediates.
struct CostReport {
    std::uint64_t chain_elements = 0;
    std::uint64_t intermediate_elements = 0;
    Method method = Method::EC;
};

namespace detail {

inline std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
    std::uint64_t r = 0;
    if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("cost estimate overflows 64 bits");
    return r;
}

inline std::uint64_t add(std::uint64_t a, std::uint64_t b) {
    std::uint64_t r = 0;
    if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("cost estimate overflows 64 bits");
    return r;
}

inline void check_cost_params(const CostParams& p) {
    if (p.L < 2 || p.B == 0 || p.V == 0 || p.D == 0 || p.O == 0 || p.k == 0)
        throw ArgumentError("cost parameters need L >= 2 and all extents >= 1");
    if (p.D != 1)
        throw RegimeError("memory formulas are only defined for input bond D = 1, got D = " + std::to_string(p.D));
}

// (L-2)*B*V + B*O: one batched vector per absorbed unit, identical for both methods.
inline std::uint64_t sweep_intermediates(const CostParams& p) {
    return add(mul(mul(p.L - 2, p.B), p.V), mul(p.B, p.O));
}

}  // namespace detail

/// Chain (B,V)-(B,V,V)-...-(B,V,O): (L-1)*B*V^2 + B*V*O + B*V.
inline CostReport estimate_ec(const CostParams& p) {
    detail::check_cost_params(p);
    using detail::add;
    using detail::mul;
    CostReport r;
    r.method = Method::EC;
    r.chain_elements = add(add(mul(mul(p.L - 1, p.B), mul(p.V, p.V)), mul(mul(p.B, p.V), p.O)), mul(p.B, p.V));
    r.intermediate_elements = detail::sweep_intermediates(p);
    return r;
}

/// Dense stacked chain (BV,)-(BV,BV)-...-(BV,BO) under the physical-first sweep:
/// (L-1)*B^2*V^2 + B^2*D*V*O + B*V.
inline CostReport estimate_btn_sweep(const CostParams& p) {
    detail::check_cost_params(p);
    using detail::add;
    using detail::mul;
    const std::uint64_t b2 = mul(p.B, p.B);
    CostReport r;
    r.method = Method::BTN;
    r.chain_elements =
        add(add(mul(mul(p.L - 1, b2), mul(p.V, p.V)), mul(mul(b2, p.D), mul(p.V, p.O))), mul(p.B, p.V));
    r.intermediate_elements = detail::sweep_intermediates(p);
    return r;
}

struct EstimateCheck {
    std::uint64_t measured = 0;
    std::uint64_t predicted = 0;
    double ratio = 0.0;
    bool passed = false;
};

inline constexpr double kEstimateRatioLow = 0.5;
inline constexpr double kEstimateRatioHigh = 2.0;

/// Measured engine peak against the predicted chain storage. Engines also hold
/// transient workspace, so agreement up to a constant factor counts as a pass.
inline EstimateCheck check_estimate(const BatchStats& stats, const CostReport& report) {
    EstimateCheck c;
    c.measured = stats.peak_elements;
    c.predicted = report.chain_elements;
    c.ratio = c.predicted == 0 ? 0.0 : static_cast<double>(c.measured) / static_cast<double>(c.predicted);
    c.passed = c.ratio >= kEstimateRatioLow && c.ratio <= kEstimateRatioHigh;
    return c;
}

}  // namespace tnstack
