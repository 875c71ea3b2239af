#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include "tnstack/meter.hpp"
#include "tnstack/mps.hpp"
#include "tnstack/stacking.hpp"
#include "tnstack/tensor.hpp"

namespace tnstack {

enum class Method { LP, BTN, EC, EC_HALVING };

inline std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::LP: return "LP";
        case Method::BTN: return "BTN";
        case Method::EC: return "EC";
        case Method::EC_HALVING: return "EC_HALVING";
    }
    return "?";
}

struct BatchStats {
    double seconds = 0.0;
    std::uint64_t peak_elements = 0;  ///< high-water mark of engine-owned dense elements
};

/// Batched inner products <C|I_b>. `values` has shape (B,) or (B, O).
struct BatchResult {
    DenseTensor values;
    Method method = Method::LP;
    BatchStats stats;
};

namespace detail {

class Stopwatch {
public:
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void check_batch_compatible(const Mps& core, std::span<const Mps> inputs) {
    if (inputs.empty()) throw ArgumentError("batch contraction needs at least one input");
    for (std::size_t b = 0; b < inputs.size(); ++b) {
        try {
            check_inner_product_shapes(core, inputs[b]);
        } catch (const ShapeError& e) {
            throw ShapeError("input " + std::to_string(b) + ": " + e.what());
        }
    }
}

inline Shape values_shape(std::size_t batch, const Mps& core) {
    return core.has_output() ? Shape{batch, core.output_extent()} : Shape{batch};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Loop
// ---------------------------------------------------------------------------

struct LoopOptions {
    std::size_t threads = 1;
};

/// One inner product per input.
inline BatchResult contract_loop(const Mps& core, std::span<const Mps> inputs, LoopOptions options = {}) {
    const detail::Stopwatch clock;
    detail::check_batch_compatible(core, inputs);
    const std::size_t B = inputs.size();
    const std::size_t out = core.output_extent();
    DenseTensor values{detail::values_shape(B, core)};

    const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, B));
    std::vector<ElementMeter> meters(threads);
    auto work = [&](std::size_t t) {
        for (std::size_t b = t; b < B; b += threads) {
            const DenseTensor r = detail::inner_product_metered(core, inputs[b], &meters[t]);
            for (std::size_t o = 0; o < out; ++o) values[b * out + o] = r[o];
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
    }

    BatchResult result{std::move(values), Method::LP, {}};
    result.stats.peak_elements = result.values.size();
    for (const auto& m : meters) result.stats.peak_elements += m.peak();
    result.stats.seconds = clock.seconds();
    return result;
}

// ---------------------------------------------------------------------------
// Batched tensor network
// ---------------------------------------------------------------------------

/// Leg of a node in the 2L-node network formed by the core MPS (nodes 0..L-1)
/// and the dense stacked MPS (nodes L..2L-1). Legs with the same label are
/// contracted with each other.
struct NetworkLeg {
    int label;
    std::size_t extent;
};

struct BtnNetwork {
    std::size_t sites = 0;
    std::vector<std::vector<NetworkLeg>> nodes;
    int stack_label = 0;
    int output_label = 0;

    [[nodiscard]] bool is_stacked_node(std::size_t id) const noexcept { return id >= sites && id < 2 * sites; }
};

namespace detail {

struct BtnLabels {
    std::size_t L;
    [[nodiscard]] int physical(std::size_t j) const { return static_cast<int>(j); }
    [[nodiscard]] int core_bond(std::size_t j) const { return static_cast<int>(L + j); }
    [[nodiscard]] int stacked_bond(std::size_t j) const { return static_cast<int>(2 * L + j); }
    [[nodiscard]] int stack() const { return static_cast<int>(3 * L); }
    [[nodiscard]] int output() const { return static_cast<int>(3 * L + 1); }
    [[nodiscard]] int dummy_left() const { return static_cast<int>(3 * L + 2); }
    [[nodiscard]] int dummy_right() const { return static_cast<int>(3 * L + 3); }
};

inline std::uint64_t legs_elements(const std::vector<NetworkLeg>& legs) {
    std::uint64_t n = 1;
    for (const auto& l : legs) n *= l.extent;
    return n;
}

inline bool share_bond(const std::vector<NetworkLeg>& a, const std::vector<NetworkLeg>& b) {
    for (const auto& x : a)
        for (const auto& y : b)
            if (x.label == y.label) return true;
    return false;
}

inline std::vector<NetworkLeg> merged_legs(const std::vector<NetworkLeg>& a, const std::vector<NetworkLeg>& b) {
    std::vector<NetworkLeg> out;
    auto contains = [](const std::vector<NetworkLeg>& v, int label) {
        for (const auto& l : v)
            if (l.label == label) return true;
        return false;
    };
    for (const auto& x : a)
        if (!contains(b, x.label)) out.push_back(x);
    for (const auto& y : b)
        if (!contains(a, y.label)) out.push_back(y);
    return out;
}

}  // namespace detail

/// Builds the contraction graph from core unit shapes (left, physical, right[, out])
/// and dense stacked site shapes (physical, [left], [right], [stack]).
inline BtnNetwork make_btn_network(std::span<const Shape> core_units, std::span<const Shape> stacked_sites,
                                   std::size_t stack_site) {
    const std::size_t L = core_units.size();
    if (L == 0) throw ShapeError("BTN network needs at least one site");
    if (stacked_sites.size() != L)
        throw ShapeError("core has " + std::to_string(L) + " units but the stack has " +
                         std::to_string(stacked_sites.size()) + " sites");
    if (stack_site >= L) throw BoundsError("stack site out of range");
    const detail::BtnLabels lab{L};
    BtnNetwork net;
    net.sites = L;
    net.stack_label = lab.stack();
    net.output_label = lab.output();

    for (std::size_t j = 0; j < L; ++j) {
        const Shape& s = core_units[j];
        const bool last = j + 1 == L;
        if (s.rank() != 3 && !(last && s.rank() == 4))
            throw ShapeError("core unit " + std::to_string(j) + " has shape " + s.to_string());
        std::vector<NetworkLeg> legs{{j == 0 ? lab.dummy_left() : lab.core_bond(j - 1), s[0]},
                                     {lab.physical(j), s[1]},
                                     {last ? lab.dummy_right() : lab.core_bond(j), s[2]}};
        if (s.rank() == 4) legs.push_back({lab.output(), s[3]});
        net.nodes.push_back(std::move(legs));
    }
    for (std::size_t j = 0; j < L; ++j) {
        const Shape& s = stacked_sites[j];
        std::vector<int> labels{lab.physical(j)};
        if (j > 0) labels.push_back(lab.stacked_bond(j - 1));
        if (j + 1 < L) labels.push_back(lab.stacked_bond(j));
        if (j == stack_site) labels.push_back(lab.stack());
        if (labels.size() != s.rank())
            throw ShapeError("stacked site " + std::to_string(j) + " has shape " + s.to_string() + ", expected rank " +
                             std::to_string(labels.size()));
        std::vector<NetworkLeg> legs;
        for (std::size_t a = 0; a < labels.size(); ++a) legs.push_back({labels[a], s[a]});
        net.nodes.push_back(std::move(legs));
    }

    // Every contracted label must carry the same extent on both ends.
    for (std::size_t x = 0; x < net.nodes.size(); ++x)
        for (std::size_t y = x + 1; y < net.nodes.size(); ++y)
            for (const auto& a : net.nodes[x])
                for (const auto& b : net.nodes[y])
                    if (a.label == b.label && a.extent != b.extent)
                        throw ShapeError("bond extent mismatch between network nodes " + std::to_string(x) + " and " +
                                         std::to_string(y) + ": " + std::to_string(a.extent) + " vs " +
                                         std::to_string(b.extent));
    return net;
}

inline BtnNetwork make_btn_network(const Mps& core, const StackedMps& stacked) {
    std::vector<Shape> core_shapes;
    for (const auto& u : core.units()) core_shapes.push_back(u.shape());
    const auto site_shapes = stacked.site_shapes();
    return make_btn_network(core_shapes, site_shapes, stacked.stack_site());
}

enum class PlanStrategy { SweepLR, Greedy };

inline std::string_view to_string(PlanStrategy s) noexcept {
    return s == PlanStrategy::SweepLR ? "SWEEP_LR" : "GREEDY";
}

/// One pairwise contraction. The result gets node id `initial_nodes + step index`.
struct PlanStep {
    std::size_t lhs;
    std::size_t rhs;
    std::uint64_t result_elements;  ///< predicted size of the step's result
    std::uint64_t live_elements;    ///< predicted engine-owned elements while the step runs
};

struct ContractionPlan {
    PlanStrategy strategy = PlanStrategy::SweepLR;
    std::size_t initial_nodes = 0;
    std::vector<PlanStep> steps;

    [[nodiscard]] std::uint64_t predicted_peak() const noexcept {
        std::uint64_t peak = 0;
        for (const auto& s : steps) peak = std::max(peak, s.live_elements);
        return peak;
    }
};

namespace detail {

// Replays a sequence of node pairs on the network, validating it and filling
// in the predicted sizes. Stacked sites are materialized when first consumed
// and count towards the live set for the duration of that step.
inline ContractionPlan simulate_plan(const BtnNetwork& net, PlanStrategy strategy,
                                     const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    ContractionPlan plan;
    plan.strategy = strategy;
    plan.initial_nodes = net.nodes.size();
    std::vector<std::vector<NetworkLeg>> nodes = net.nodes;
    std::vector<bool> alive(nodes.size(), true);
    std::uint64_t live = 0;  // intermediates currently held
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto [a, b] = pairs[i];
        if (a >= nodes.size() || b >= nodes.size() || a == b || !alive[a] || !alive[b])
            throw PlanError("plan step " + std::to_string(i) + " references unavailable nodes " + std::to_string(a) +
                            " and " + std::to_string(b));
        if (!share_bond(nodes[a], nodes[b]))
            throw PlanError("plan step " + std::to_string(i) + ": nodes " + std::to_string(a) + " and " +
                            std::to_string(b) + " share no bond");
        std::uint64_t transient = 0, consumed = 0;
        for (std::size_t id : {a, b}) {
            const std::uint64_t n = legs_elements(nodes[id]);
            if (net.is_stacked_node(id)) transient += n;
            if (id >= net.nodes.size()) consumed += n;
        }
        auto legs = merged_legs(nodes[a], nodes[b]);
        const std::uint64_t result = legs_elements(legs);
        plan.steps.push_back({a, b, result, live + transient + result});
        live = live - consumed + result;
        alive[a] = alive[b] = false;
        nodes.push_back(std::move(legs));
        alive.push_back(true);
    }
    std::size_t remaining = 0;
    for (bool x : alive) remaining += x ? 1 : 0;
    if (remaining != 1)
        throw PlanError("plan leaves " + std::to_string(remaining) + " disconnected nodes instead of one");
    return plan;
}

inline std::vector<std::pair<std::size_t, std::size_t>> sweep_pairs(std::size_t L) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t j = 0; j < L; ++j) pairs.emplace_back(j, L + j);
    std::size_t env = 2 * L;
    for (std::size_t j = 1; j < L; ++j) {
        pairs.emplace_back(env, 2 * L + j);
        env = 2 * L + L + (j - 1);
    }
    return pairs;
}

inline std::vector<std::pair<std::size_t, std::size_t>> greedy_pairs(const BtnNetwork& net) {
    std::vector<std::vector<NetworkLeg>> nodes = net.nodes;
    std::vector<std::size_t> alive(nodes.size());
    for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    while (alive.size() > 1) {
        std::optional<std::tuple<std::uint64_t, std::size_t, std::size_t>> best;
        for (std::size_t x = 0; x < alive.size(); ++x)
            for (std::size_t y = x + 1; y < alive.size(); ++y) {
                const auto& a = nodes[alive[x]];
                const auto& b = nodes[alive[y]];
                if (!share_bond(a, b)) continue;
                const std::uint64_t cost = legs_elements(merged_legs(a, b));
                if (!best || cost < std::get<0>(*best)) best = std::make_tuple(cost, x, y);
            }
        if (!best) throw PlanError("network is disconnected");
        const auto [cost, x, y] = *best;
        const std::size_t a = alive[x], b = alive[y];
        pairs.emplace_back(a, b);
        nodes.push_back(merged_legs(nodes[a], nodes[b]));
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(y));
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(x));
        alive.push_back(nodes.size() - 1);
    }
    return pairs;
}

}  // namespace detail

/// SweepLR contracts every physical pair first and then absorbs the resulting
/// chain from left to right. Greedy repeatedly contracts the pair of
/// bond-sharing nodes whose result has the fewest elements (ties go to the
/// lowest node ids).
inline ContractionPlan plan_btn(const BtnNetwork& net, PlanStrategy strategy) {
    const auto pairs =
        strategy == PlanStrategy::SweepLR ? detail::sweep_pairs(net.sites) : detail::greedy_pairs(net);
    return detail::simulate_plan(net, strategy, pairs);
}

inline ContractionPlan plan_btn(const Mps& core, const StackedMps& stacked, PlanStrategy strategy) {
    return plan_btn(make_btn_network(core, stacked), strategy);
}

/// Plans from shapes alone: the core is described by its generator spec.
inline ContractionPlan plan_btn(const MpsSpec& core_spec, std::span<const Shape> stacked_sites,
                                PlanStrategy strategy, std::optional<std::size_t> stack_site = std::nullopt) {
    std::vector<Shape> core_shapes;
    for (std::size_t j = 0; j < core_spec.L; ++j) {
        const std::size_t left = j == 0 ? 1 : core_spec.bond;
        const std::size_t right = j + 1 == core_spec.L ? 1 : core_spec.bond;
        if (j + 1 == core_spec.L && core_spec.output)
            core_shapes.push_back(Shape{left, core_spec.k, right, *core_spec.output});
        else
            core_shapes.push_back(Shape{left, core_spec.k, right});
    }
    return plan_btn(make_btn_network(core_shapes, stacked_sites, stack_site.value_or(core_spec.L - 1)), strategy);
}

inline constexpr std::uint64_t kDefaultMemGuard = 200'000'000;

/// Element budget for dense BTN contractions; TNSTACK_MEM_GUARD overrides the default.
inline std::uint64_t default_mem_guard() {
    if (const char* env = std::getenv("TNSTACK_MEM_GUARD")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end != env && *end == '\0') return v;
    }
    return kDefaultMemGuard;
}

struct BtnOptions {
    std::uint64_t mem_guard = default_mem_guard();
};

/// One contraction of the core against the dense block-diagonal stacked MPS,
/// executed along `plan`.
inline BatchResult contract_btn(const Mps& core, const StackedMps& stacked, const ContractionPlan& plan,
                                const BtnOptions& options = {}) {
    const detail::Stopwatch clock;
    if (core.length() != stacked.length())
        throw ShapeError("contract_btn: core has " + std::to_string(core.length()) + " sites, stack has " +
                         std::to_string(stacked.length()));
    for (std::size_t j = 0; j < core.length(); ++j)
        if (core.physical_extent(j) != stacked.physical_extent(j))
            throw ShapeError("contract_btn: physical extent mismatch at site " + std::to_string(j));
    const BtnNetwork net = make_btn_network(core, stacked);

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& s : plan.steps) pairs.emplace_back(s.lhs, s.rhs);
    if (plan.initial_nodes != net.nodes.size())
        throw PlanError("plan was built for " + std::to_string(plan.initial_nodes) + " nodes, network has " +
                        std::to_string(net.nodes.size()));
    const ContractionPlan replay = detail::simulate_plan(net, plan.strategy, pairs);
    for (std::size_t i = 0; i < replay.steps.size(); ++i)
        if (replay.steps[i].result_elements != plan.steps[i].result_elements)
            throw PlanError("plan step " + std::to_string(i) + " was built for different shapes");
    if (replay.predicted_peak() > options.mem_guard)
        throw MemoryGuardError("BTN plan needs " + std::to_string(replay.predicted_peak()) +
                               " live elements, guard is " + std::to_string(options.mem_guard));

    struct Node {
        const DenseTensor* view = nullptr;
        std::unique_ptr<DenseTensor> owned;
        std::vector<int> labels;
    };
    std::vector<Node> nodes(net.nodes.size());
    for (std::size_t id = 0; id < net.nodes.size(); ++id)
        for (const auto& leg : net.nodes[id]) nodes[id].labels.push_back(leg.label);
    for (std::size_t j = 0; j < net.sites; ++j) nodes[j].view = &core.unit(j);

    ElementMeter meter;
    auto tensor_of = [&](std::size_t id) -> const DenseTensor& {
        Node& n = nodes[id];
        if (!n.view) {
            n.owned = std::make_unique<DenseTensor>(materialize_site(stacked, id - net.sites));
            meter.acquire(n.owned->size());
            n.view = n.owned.get();
        }
        return *n.view;
    };

    for (const auto& step : pairs) {
        const DenseTensor& a = tensor_of(step.first);
        const DenseTensor& b = tensor_of(step.second);
        const auto& la = nodes[step.first].labels;
        const auto& lb = nodes[step.second].labels;
        std::vector<std::size_t> axes_a, axes_b;
        std::vector<int> labels;
        for (std::size_t x = 0; x < la.size(); ++x) {
            bool shared = false;
            for (std::size_t y = 0; y < lb.size(); ++y)
                if (la[x] == lb[y]) {
                    axes_a.push_back(x);
                    axes_b.push_back(y);
                    shared = true;
                }
            if (!shared) labels.push_back(la[x]);
        }
        for (int l : lb)
            if (std::find(la.begin(), la.end(), l) == la.end()) labels.push_back(l);

        Node result;
        result.owned = std::make_unique<DenseTensor>(contract_pair(a, axes_a, b, axes_b));
        meter.acquire(result.owned->size());
        result.view = result.owned.get();
        result.labels = std::move(labels);
        for (std::size_t id : {step.first, step.second}) {
            if (nodes[id].owned) meter.release(nodes[id].owned->size());
            nodes[id] = Node{};
        }
        nodes.push_back(std::move(result));
    }

    // Reorder the remaining legs to (stack, [output], extent-1 boundary legs).
    Node& last = nodes.back();
    std::vector<std::size_t> perm;
    auto axis_of = [&](int label) {
        return static_cast<std::size_t>(std::find(last.labels.begin(), last.labels.end(), label) -
                                        last.labels.begin());
    };
    perm.push_back(axis_of(net.stack_label));
    if (core.has_output()) perm.push_back(axis_of(net.output_label));
    for (std::size_t a = 0; a < last.labels.size(); ++a)
        if (std::find(perm.begin(), perm.end(), a) == perm.end()) perm.push_back(a);
    DenseTensor values = permute(*last.view, perm).reshaped(detail::values_shape(stacked.batch(), core));

    BatchResult result{std::move(values), Method::BTN, {}};
    result.stats.peak_elements = meter.peak();
    result.stats.seconds = clock.seconds();
    return result;
}

// ---------------------------------------------------------------------------
// Efficient coding
// ---------------------------------------------------------------------------

namespace detail {

inline void check_uniform_batch(std::span<const Mps> inputs) {
    for (std::size_t b = 1; b < inputs.size(); ++b)
        for (std::size_t j = 0; j < inputs[0].length(); ++j)
            if (!(inputs[b].unit(j).shape() == inputs[0].unit(j).shape()))
                throw ShapeError("input " + std::to_string(b) + " unit " + std::to_string(j) + " has shape " +
                                 inputs[b].unit(j).shape().to_string() + ", input 0 has " +
                                 inputs[0].unit(j).shape().to_string());
}

// Per-site batch contraction over the physical index:
//   out[b, i*Dl + n, j*Dr + m] = sum_s core[i, s, j] * input_b[n, s, m]
// where j runs over the core's right bond (or its output leg on the last unit).
inline DenseTensor ec_site(const DenseTensor& core_unit, std::span<const Mps> inputs, std::size_t site) {
    const std::size_t B = inputs.size();
    const std::size_t vl = core_unit.extent(0), k = core_unit.extent(1);
    const std::size_t vr = core_unit.size() / (vl * k);
    const DenseTensor& ref = inputs[0].unit(site);
    const std::size_t dl = ref.extent(0), dr = ref.extent(2);
    const std::size_t rows = vl * dl, cols = vr * dr;
    DenseTensor out{Shape{B, rows, cols}};
    const double* c = core_unit.data().data();
    double* o = out.data().data();
    for (std::size_t b = 0; b < B; ++b) {
        const double* in = inputs[b].unit(site).data().data();
        for (std::size_t i = 0; i < vl; ++i)
            for (std::size_t n = 0; n < dl; ++n) {
                double* row = o + (b * rows + i * dl + n) * cols;
                for (std::size_t s = 0; s < k; ++s)
                    for (std::size_t j = 0; j < vr; ++j) {
                        const double cv = c[(i * k + s) * vr + j];
                        const double* in_row = in + (n * k + s) * dr;
                        double* dst = row + j * dr;
                        for (std::size_t m = 0; m < dr; ++m) dst[m] += cv * in_row[m];
                    }
            }
    }
    return out;
}

inline std::vector<DenseTensor> ec_stage_one(const Mps& core, std::span<const Mps> inputs, ElementMeter& meter) {
    std::vector<DenseTensor> chain;
    for (std::size_t j = 0; j < core.length(); ++j) {
        chain.push_back(ec_site(core.unit(j), inputs, j));
        meter.acquire(chain.back().size());
    }
    return chain;
}

inline BatchResult ec_finish(DenseTensor env, const Mps& core, std::size_t batch, Method method,
                             const ElementMeter& meter, const Stopwatch& clock) {
    BatchResult result{std::move(env).reshaped(values_shape(batch, core)), method, {}};
    result.stats.peak_elements = meter.peak();
    result.stats.seconds = clock.seconds();
    return result;
}

}  // namespace detail

/// Local batch contraction of every site, then a left-to-right batched_matmul sweep.
inline BatchResult contract_ec(const Mps& core, std::span<const Mps> inputs) {
    const detail::Stopwatch clock;
    detail::check_batch_compatible(core, inputs);
    detail::check_uniform_batch(inputs);
    ElementMeter meter;
    std::vector<DenseTensor> chain = detail::ec_stage_one(core, inputs, meter);

    DenseTensor env = std::move(chain[0]);  // (B, 1, X)
    for (std::size_t j = 1; j < chain.size(); ++j) {
        DenseTensor next = batched_matmul(env, chain[j]);
        meter.acquire(next.size());
        meter.release(env.size());
        meter.release(chain[j].size());
        chain[j] = DenseTensor{};
        env = std::move(next);
    }
    return detail::ec_finish(std::move(env), core, inputs.size(), Method::EC, meter, clock);
}

/// Like contract_ec, but the square middle units are multiplied pairwise,
/// halving the chain each round. Odd rounds are padded with batched identities.
/// Throws FallbackRequired when the middle units are not square and uniform.
inline BatchResult contract_ec_halving(const Mps& core, std::span<const Mps> inputs) {
    const detail::Stopwatch clock;
    detail::check_batch_compatible(core, inputs);
    detail::check_uniform_batch(inputs);

    const std::size_t L = core.length();
    if (L >= 3) {
        const Shape& ref = core.unit(1).shape();
        const std::size_t fused = ref[0] * inputs[0].left_bond(1);
        for (std::size_t j = 1; j + 1 < L; ++j) {
            const std::size_t rows = core.left_bond(j) * inputs[0].left_bond(j);
            const std::size_t cols = core.right_bond(j) * inputs[0].right_bond(j);
            if (rows != fused || cols != fused)
                throw FallbackRequired("halving sweep needs square uniform middle units; site " + std::to_string(j) +
                                       " gives " + std::to_string(rows) + "x" + std::to_string(cols));
        }
    }

    ElementMeter meter;
    std::vector<DenseTensor> chain = detail::ec_stage_one(core, inputs, meter);
    const std::size_t B = inputs.size();
    if (L == 1) return detail::ec_finish(std::move(chain[0]), core, B, Method::EC_HALVING, meter, clock);
    if (L == 2) {
        DenseTensor env = batched_matmul(chain[0], chain[1]);
        meter.acquire(env.size());
        return detail::ec_finish(std::move(env), core, B, Method::EC_HALVING, meter, clock);
    }

    std::vector<DenseTensor> middle;
    for (std::size_t j = 1; j + 1 < L; ++j) middle.push_back(std::move(chain[j]));
    const std::size_t n = middle.front().extent(1);
    while (middle.size() > 1) {
        if (middle.size() % 2 == 1) {
            DenseTensor eye{Shape{B, n, n}};
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t i = 0; i < n; ++i) eye[(b * n + i) * n + i] = 1.0;
            meter.acquire(eye.size());
            middle.push_back(std::move(eye));
        }
        std::vector<DenseTensor> next;
        for (std::size_t t = 0; t < middle.size(); t += 2) {
            next.push_back(batched_matmul(middle[t], middle[t + 1]));
            meter.acquire(next.back().size());
            meter.release(middle[t].size());
            meter.release(middle[t + 1].size());
            middle[t] = DenseTensor{};
            middle[t + 1] = DenseTensor{};
        }
        middle = std::move(next);
    }

    DenseTensor left = batched_matmul(chain[0], middle[0]);
    meter.acquire(left.size());
    DenseTensor env = batched_matmul(left, chain[L - 1]);
    meter.acquire(env.size());
    return detail::ec_finish(std::move(env), core, B, Method::EC_HALVING, meter, clock);
}

}  // namespace tnstack
