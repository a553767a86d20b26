#include "bbox/memory.hpp"

#include <cstring>
#include <new>
#include <utility>

namespace bbox {

namespace {
constexpr std::align_val_t kBufferAlignment{64};
thread_local int t_pipeline_depth = 0;
} // namespace

void MemoryTracker::on_alloc(std::size_t bytes) noexcept {
    allocations_.fetch_add(1);
    const std::uint64_t now = current_.fetch_add(bytes) + bytes;
    std::uint64_t peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
}

void MemoryTracker::on_free(std::size_t bytes) noexcept {
    current_.fetch_sub(bytes);
}

TrackedBuffer::TrackedBuffer(std::size_t size, MemoryTracker* tracker)
    : size_(size), tracker_(tracker) {
    if (size_ == 0) {
        return;
    }
    data_ = static_cast<std::byte*>(::operator new(size_, kBufferAlignment));
    std::memset(data_, 0, size_);
    if (tracker_ != nullptr) {
        tracker_->on_alloc(size_);
    }
}

TrackedBuffer::~TrackedBuffer() { release(); }

TrackedBuffer::TrackedBuffer(TrackedBuffer&& other) noexcept
    : data_(std::exchange(other.data_, nullptr)),
      size_(std::exchange(other.size_, 0)),
      tracker_(std::exchange(other.tracker_, nullptr)) {}

TrackedBuffer& TrackedBuffer::operator=(TrackedBuffer&& other) noexcept {
    if (this != &other) {
        release();
        data_ = std::exchange(other.data_, nullptr);
        size_ = std::exchange(other.size_, 0);
        tracker_ = std::exchange(other.tracker_, nullptr);
    }
    return *this;
}

void TrackedBuffer::release() noexcept {
    if (data_ == nullptr) {
        return;
    }
    ::operator delete(data_, kBufferAlignment);
    if (tracker_ != nullptr) {
        tracker_->on_free(size_);
    }
    data_ = nullptr;
    size_ = 0;
}

namespace instrument {

bool in_pipeline() noexcept { return t_pipeline_depth > 0; }

PipelineScope::PipelineScope() noexcept { ++t_pipeline_depth; }
PipelineScope::~PipelineScope() { --t_pipeline_depth; }

} // namespace instrument

} // namespace bbox
