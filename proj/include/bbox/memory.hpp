#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>

namespace bbox {

// Exact byte accounting for the large buffers the loader owns (pipeline
// arena, page cache pool). Not RSS: only TrackedBuffer allocations count.
class MemoryTracker {
public:
    void on_alloc(std::size_t bytes) noexcept;
    void on_free(std::size_t bytes) noexcept;

    std::uint64_t current_bytes() const noexcept { return current_.load(); }
    std::uint64_t peak_bytes() const noexcept { return peak_.load(); }
    std::uint64_t allocations() const noexcept { return allocations_.load(); }

    void reset_peak() noexcept { peak_.store(current_.load()); }

private:
    std::atomic<std::uint64_t> current_{0};
    std::atomic<std::uint64_t> peak_{0};
    std::atomic<std::uint64_t> allocations_{0};
};

// 64-byte aligned, zero-initialized, move-only byte buffer.
class TrackedBuffer {
public:
    TrackedBuffer() = default;
    TrackedBuffer(std::size_t size, MemoryTracker* tracker);
    ~TrackedBuffer();

    TrackedBuffer(TrackedBuffer&& other) noexcept;
    TrackedBuffer& operator=(TrackedBuffer&& other) noexcept;
    TrackedBuffer(const TrackedBuffer&) = delete;
    TrackedBuffer& operator=(const TrackedBuffer&) = delete;

    std::byte* data() noexcept { return data_; }
    const std::byte* data() const noexcept { return data_; }
    std::size_t size() const noexcept { return size_; }
    std::span<std::byte> span() noexcept { return {data_, size_}; }
    std::span<const std::byte> span() const noexcept { return {data_, size_}; }

private:
    void release() noexcept;

    std::byte* data_ = nullptr;
    std::size_t size_ = 0;
    MemoryTracker* tracker_ = nullptr;
};

namespace instrument {

// Nonzero while the current thread is executing pipeline transforms. Test
// binaries use this to attribute heap allocations to the pipeline.
bool in_pipeline() noexcept;

class PipelineScope {
public:
    PipelineScope() noexcept;
    ~PipelineScope();
    PipelineScope(const PipelineScope&) = delete;
    PipelineScope& operator=(const PipelineScope&) = delete;
};

} // namespace instrument

} // namespace bbox
