#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

namespace bbox {

enum class SlotState : std::uint8_t { Free, Filling, Ready, Consuming };

const char* slot_state_name(SlotState state);

// The ring's state machine without synchronization, so it can be explored
// exhaustively. Batch b always lives in slot b % S; the producer cursor is
// the next batch to open, the consumer cursor the next batch to consume.
class RingState {
public:
    enum class Fill { Opened, Joined, Passed, Blocked };

    explicit RingState(std::size_t slots);

    std::size_t slot_count() const noexcept { return slots_.size(); }
    SlotState state(std::size_t slot) const { return slots_[slot].state; }
    std::uint64_t batch_in(std::size_t slot) const { return slots_[slot].batch; }
    std::uint64_t producer_cursor() const noexcept { return producer_; }
    std::uint64_t consumer_cursor() const noexcept { return consumer_; }
    std::size_t in_flight() const noexcept;

    // Opened: batch now FILLING in its slot. Joined: it already was.
    // Passed: it has been filled already. Blocked: its slot is still in use
    // by an earlier batch or earlier batches are not open yet.
    Fill try_begin_fill(std::uint64_t batch);
    void finish_fill(std::size_t slot);
    // Slot of the next batch if it is READY (now CONSUMING).
    std::optional<std::size_t> try_begin_consume();
    void end_consume(std::size_t slot);

    bool operator==(const RingState&) const = default;

private:
    struct Slot {
        SlotState state = SlotState::Free;
        std::uint64_t batch = 0;
        std::uint64_t next_batch = 0;
        bool operator==(const Slot&) const = default;
    };
    std::vector<Slot> slots_;
    std::uint64_t producer_ = 0;
    std::uint64_t consumer_ = 0;
};

// Hands out each position of one batch exactly once. The counter is tagged
// with the batch id so a worker still holding an older batch id cannot
// claim positions of a newer one.
class BatchFill {
public:
    static constexpr std::uint32_t kMaxPositions = (1u << 24) - 1;

    void open(std::uint64_t batch, std::uint32_t size) noexcept;
    std::optional<std::uint32_t> claim(std::uint64_t batch) noexcept;
    // True for exactly one call: the one completing the last position.
    bool complete_one() noexcept;
    std::uint32_t size() const noexcept { return size_.load(std::memory_order_acquire); }

private:
    static std::uint64_t tag(std::uint64_t batch) noexcept { return (batch & ((1ull << 40) - 1)) << 24; }

    std::atomic<std::uint64_t> tagged_{~std::uint64_t{0}};
    std::atomic<std::uint32_t> size_{0};
    std::atomic<std::uint32_t> done_{0};
};

// Thread-safe ring of S batch slots. Any number of producers cooperate on
// batches; one consumer takes them in order.
class BatchRing {
public:
    explicit BatchRing(std::size_t slots);

    std::size_t slot_count() const noexcept { return fills_.size(); }

    // Blocks until `batch` can be filled, opening it with `size` positions
    // if nobody has. Returns its slot, or nullopt when the batch is already
    // past filling. Throws Shutdown.
    std::optional<std::size_t> begin_fill(std::uint64_t batch, std::uint32_t size);
    std::optional<std::uint32_t> claim(std::size_t slot, std::uint64_t batch) noexcept {
        return fills_[slot].claim(batch);
    }
    // Marks one claimed position done; the last one makes the slot READY.
    void complete(std::size_t slot);

    // Blocks until the next batch is READY. Throws Shutdown.
    std::size_t begin_consume();
    void end_consume(std::size_t slot);

    void shutdown();
    bool is_shutdown() const;
    // Back to the initial state; only valid while no thread uses the ring.
    void reset();

    RingState snapshot() const;
    std::uint64_t producer_blocked_ns() const noexcept { return producer_blocked_ns_.load(); }
    std::uint64_t consumer_blocked_ns() const noexcept { return consumer_blocked_ns_.load(); }

    // Leases for the single-producer case: produce() opens the next batch
    // and claims the whole slot; destruction hands it over.
    class ProduceLease {
    public:
        ProduceLease(BatchRing& ring, std::size_t slot, std::uint64_t batch) noexcept
            : ring_(&ring), slot_(slot), batch_(batch) {}
        ProduceLease(ProduceLease&& o) noexcept
            : ring_(std::exchange(o.ring_, nullptr)), slot_(o.slot_), batch_(o.batch_) {}
        ProduceLease& operator=(ProduceLease&&) = delete;
        ~ProduceLease() { commit(); }
        std::size_t slot() const noexcept { return slot_; }
        std::uint64_t batch() const noexcept { return batch_; }
        void commit();

    private:
        BatchRing* ring_;
        std::size_t slot_;
        std::uint64_t batch_;
    };

    class ConsumeLease {
    public:
        ConsumeLease(BatchRing& ring, std::size_t slot, std::uint64_t batch) noexcept
            : ring_(&ring), slot_(slot), batch_(batch) {}
        ConsumeLease(ConsumeLease&& o) noexcept
            : ring_(std::exchange(o.ring_, nullptr)), slot_(o.slot_), batch_(o.batch_) {}
        ConsumeLease& operator=(ConsumeLease&&) = delete;
        ~ConsumeLease() { release(); }
        std::size_t slot() const noexcept { return slot_; }
        std::uint64_t batch() const noexcept { return batch_; }
        void release();

    private:
        BatchRing* ring_;
        std::size_t slot_;
        std::uint64_t batch_;
    };

    ProduceLease produce();
    ConsumeLease consume();

private:
    mutable std::mutex mutex_;
    std::condition_variable fill_cv_;
    std::condition_variable consume_cv_;
    RingState state_;
    std::vector<BatchFill> fills_;
    bool shutdown_ = false;
    std::atomic<std::uint64_t> producer_blocked_ns_{0};
    std::atomic<std::uint64_t> consumer_blocked_ns_{0};
};

} // namespace bbox
