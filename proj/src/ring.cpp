#include "bbox/ring.hpp"

#include "bbox/error.hpp"

#include <algorithm>
#include <string>

namespace bbox {

namespace {
std::uint64_t elapsed_ns(std::chrono::steady_clock::time_point since) {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - since)
            .count());
}
} // namespace

const char* slot_state_name(SlotState state) {
    switch (state) {
    case SlotState::Free: return "FREE";
    case SlotState::Filling: return "FILLING";
    case SlotState::Ready: return "READY";
    case SlotState::Consuming: return "CONSUMING";
    }
    return "?";
}

RingState::RingState(std::size_t slots) : slots_(slots) {
    if (slots == 0) {
        fail(Errc::InvalidConfig, "ring needs at least one slot");
    }
    for (std::size_t i = 0; i < slots; ++i) {
        slots_[i].next_batch = i;
    }
}

std::size_t RingState::in_flight() const noexcept {
    return static_cast<std::size_t>(std::count_if(slots_.begin(), slots_.end(), [](const Slot& s) {
        return s.state != SlotState::Free;
    }));
}

RingState::Fill RingState::try_begin_fill(std::uint64_t batch) {
    Slot& s = slots_[batch % slots_.size()];
    if (s.state == SlotState::Filling && s.batch == batch) {
        return Fill::Joined;
    }
    if (batch < s.next_batch) {
        return Fill::Passed;
    }
    if (batch != producer_ || batch != s.next_batch || s.state != SlotState::Free) {
        return Fill::Blocked;
    }
    s.state = SlotState::Filling;
    s.batch = batch;
    s.next_batch = batch + slots_.size();
    producer_ = batch + 1;
    return Fill::Opened;
}

void RingState::finish_fill(std::size_t slot) {
    Slot& s = slots_[slot];
    if (s.state != SlotState::Filling) {
        fail(Errc::InvalidConfig, "finish_fill on a slot that is not FILLING");
    }
    s.state = SlotState::Ready;
}

std::optional<std::size_t> RingState::try_begin_consume() {
    const std::size_t slot = consumer_ % slots_.size();
    Slot& s = slots_[slot];
    if (s.state != SlotState::Ready || s.batch != consumer_) {
        return std::nullopt;
    }
    s.state = SlotState::Consuming;
    return slot;
}

void RingState::end_consume(std::size_t slot) {
    Slot& s = slots_[slot];
    if (s.state != SlotState::Consuming || s.batch != consumer_) {
        fail(Errc::InvalidConfig, "end_consume on a slot that is not being consumed");
    }
    s.state = SlotState::Free;
    ++consumer_;
}

//------------------------------------------------------------------------------

void BatchFill::open(std::uint64_t batch, std::uint32_t size) noexcept {
    size_.store(size, std::memory_order_relaxed);
    done_.store(0, std::memory_order_relaxed);
    tagged_.store(tag(batch), std::memory_order_release);
}

std::optional<std::uint32_t> BatchFill::claim(std::uint64_t batch) noexcept {
    const std::uint64_t want = tag(batch);
    std::uint64_t v = tagged_.load(std::memory_order_acquire);
    for (;;) {
        const std::uint32_t next = static_cast<std::uint32_t>(v & kMaxPositions);
        if ((v & ~std::uint64_t{kMaxPositions}) != want || next >= size_.load(std::memory_order_relaxed)) {
            return std::nullopt;
        }
        if (tagged_.compare_exchange_weak(v, v + 1, std::memory_order_acq_rel, std::memory_order_acquire)) {
            return next;
        }
    }
}

bool BatchFill::complete_one() noexcept {
    return done_.fetch_add(1, std::memory_order_acq_rel) + 1 == size_.load(std::memory_order_relaxed);
}

//------------------------------------------------------------------------------

BatchRing::BatchRing(std::size_t slots) : state_(slots), fills_(slots) {}

std::optional<std::size_t> BatchRing::begin_fill(std::uint64_t batch, std::uint32_t size) {
    if (size == 0 || size > BatchFill::kMaxPositions) {
        fail(Errc::InvalidConfig, "batch size out of range");
    }
    std::unique_lock lock(mutex_);
    bool waited = false;
    auto start = std::chrono::steady_clock::now();
    for (;;) {
        if (shutdown_) {
            fail(Errc::Shutdown, "ring shut down");
        }
        switch (state_.try_begin_fill(batch)) {
        case RingState::Fill::Opened: {
            const std::size_t slot = batch % fills_.size();
            fills_[slot].open(batch, size);
            if (waited) {
                producer_blocked_ns_ += elapsed_ns(start);
            }
            fill_cv_.notify_all();
            return slot;
        }
        case RingState::Fill::Joined:
            if (waited) {
                producer_blocked_ns_ += elapsed_ns(start);
            }
            return batch % fills_.size();
        case RingState::Fill::Passed:
            return std::nullopt;
        case RingState::Fill::Blocked:
            waited = true;
            fill_cv_.wait(lock);
            break;
        }
    }
}

void BatchRing::complete(std::size_t slot) {
    if (!fills_[slot].complete_one()) {
        return;
    }
    std::lock_guard lock(mutex_);
    state_.finish_fill(slot);
    consume_cv_.notify_all();
}

std::size_t BatchRing::begin_consume() {
    std::unique_lock lock(mutex_);
    bool waited = false;
    auto start = std::chrono::steady_clock::now();
    for (;;) {
        if (shutdown_) {
            fail(Errc::Shutdown, "ring shut down");
        }
        if (auto slot = state_.try_begin_consume()) {
            if (waited) {
                consumer_blocked_ns_ += elapsed_ns(start);
            }
            return *slot;
        }
        waited = true;
        consume_cv_.wait(lock);
    }
}

void BatchRing::end_consume(std::size_t slot) {
    std::lock_guard lock(mutex_);
    state_.end_consume(slot);
    fill_cv_.notify_all();
}

void BatchRing::shutdown() {
    std::lock_guard lock(mutex_);
    shutdown_ = true;
    fill_cv_.notify_all();
    consume_cv_.notify_all();
}

bool BatchRing::is_shutdown() const {
    std::lock_guard lock(mutex_);
    return shutdown_;
}

void BatchRing::reset() {
    std::lock_guard lock(mutex_);
    state_ = RingState(fills_.size());
    for (auto& f : fills_) {
        f.open(~std::uint64_t{0}, 0);
    }
    shutdown_ = false;
    producer_blocked_ns_ = 0;
    consumer_blocked_ns_ = 0;
}

RingState BatchRing::snapshot() const {
    std::lock_guard lock(mutex_);
    return state_;
}

BatchRing::ProduceLease BatchRing::produce() {
    std::uint64_t batch;
    {
        std::lock_guard lock(mutex_);
        batch = state_.producer_cursor();
    }
    auto slot = begin_fill(batch, 1);
    if (!slot || !fills_[*slot].claim(batch)) {
        fail(Errc::InvalidConfig, "produce() requires a single producer");
    }
    return ProduceLease(*this, *slot, batch);
}

BatchRing::ConsumeLease BatchRing::consume() {
    const std::size_t slot = begin_consume();
    return ConsumeLease(*this, slot, snapshot().batch_in(slot));
}

void BatchRing::ProduceLease::commit() {
    if (ring_ != nullptr) {
        std::exchange(ring_, nullptr)->complete(slot_);
    }
}

void BatchRing::ConsumeLease::release() {
    if (ring_ != nullptr) {
        std::exchange(ring_, nullptr)->end_consume(slot_);
    }
}

} // namespace bbox
