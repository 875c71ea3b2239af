#pragma once

#include <algorithm>
#include <cstdint>

namespace tnstack {

/// High-water mark of live dense elements owned by an engine.
class ElementMeter {
public:
    void acquire(std::uint64_t n) noexcept {
        live_ += n;
        peak_ = std::max(peak_, live_);
    }
    void release(std::uint64_t n) noexcept { live_ -= std::min(n, live_); }

    [[nodiscard]] std::uint64_t live() const noexcept { return live_; }
    [[nodiscard]] std::uint64_t peak() const noexcept { return peak_; }

private:
    std::uint64_t live_ = 0;
    std::uint64_t peak_ = 0;
};

}  // namespace tnstack
