#pragma once

#include "bbox/memory.hpp"
#include "bbox/sample.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <thread>
#include <vector>

namespace bbox {

class Dataset;

inline constexpr std::uint64_t kNeverUsed = ~std::uint64_t{0};

// Page references of an epoch, one step per scheduled sample, with the
// next-use links farthest-next-use eviction needs.
class PageSchedule {
public:
    PageSchedule() = default;
    PageSchedule(const std::vector<std::vector<std::uint64_t>>& pages_per_step,
                 std::uint64_t num_pages);
    static PageSchedule for_order(const Dataset& dataset, std::span<const std::uint64_t> order);

    std::size_t num_steps() const noexcept { return step_begin_.empty() ? 0 : step_begin_.size() - 1; }
    std::uint64_t num_pages() const noexcept { return num_pages_; }
    std::span<const std::uint64_t> pages(std::size_t step) const;
    // Next step after `step` referencing pages(step)[k], or kNeverUsed.
    std::uint64_t next_use(std::size_t step, std::size_t k) const;
    std::uint64_t first_use(std::uint64_t page) const { return first_use_[page]; }
    std::uint64_t total_uses(std::uint64_t page) const { return total_uses_[page]; }
    // Pages in the order the epoch first touches them; each appears once.
    const std::vector<std::uint64_t>& first_use_order() const noexcept { return first_use_order_; }
    std::size_t max_pages_per_step() const noexcept { return max_per_step_; }
    // Largest number of distinct pages referenced by one batch of
    // `batch_size` consecutive steps (batches aligned at step 0).
    std::size_t max_pages_per_batch(std::size_t batch_size) const;

private:
    // Takes per-step page lists already sorted and distinct.
    PageSchedule(std::vector<std::size_t> step_begin, std::vector<std::uint64_t> refs,
                 std::uint64_t num_pages);
    void index();

    std::uint64_t num_pages_ = 0;
    std::vector<std::size_t> step_begin_;
    std::vector<std::uint64_t> refs_;
    std::vector<std::uint64_t> next_use_;
    std::vector<std::uint64_t> first_use_;
    std::vector<std::uint64_t> total_uses_;
    std::vector<std::uint64_t> first_use_order_;
    std::size_t max_per_step_ = 0;
};

struct CacheStats {
    std::uint64_t fetch_count = 0;
    std::uint64_t reload_count = 0;
    std::uint64_t peak_resident = 0;
};

// Loader-managed page cache for one epoch whose order is known up front.
// Pages are fetched in schedule order by a single driver; when full, the
// resident page whose next use is farthest away is evicted, and a page with
// no remaining uses is dropped as soon as its last user releases it.
//
// Steps become "ready" in order. A ready step pins its pages until
// release(step). A prefetch window bounds how many pages the driver may
// fetch on behalf of steps nobody has released yet.
class ProcessCache {
public:
    // `pool` supplies page buffers to reuse; missing ones are allocated.
    ProcessCache(const Dataset& dataset, PageSchedule schedule, std::uint64_t capacity_pages,
                 std::uint64_t window_pages, MemoryTracker* tracker = nullptr,
                 std::vector<TrackedBuffer> pool = {});
    ProcessCache(const Dataset& dataset, std::span<const std::uint64_t> order,
                 std::uint64_t capacity_pages, std::uint64_t window_pages,
                 MemoryTracker* tracker = nullptr, std::vector<TrackedBuffer> pool = {});
    ~ProcessCache();

    ProcessCache(const ProcessCache&) = delete;
    ProcessCache& operator=(const ProcessCache&) = delete;

    const PageSchedule& schedule() const noexcept { return schedule_; }
    std::span<const std::uint64_t> order() const noexcept { return order_; }
    std::uint64_t capacity() const noexcept { return capacity_; }

    // Sequential epoch: ensure, consume, release for every step in order.
    CacheStats run_schedule(const std::function<void(std::uint64_t step, std::uint64_t sample)>& consume);

    // Driver side: makes `step` ready (must be the next unready step).
    // Blocks on the prefetch window and on pinned eviction victims.
    void ensure(std::uint64_t step);
    // Runs ensure() for all steps on a background thread.
    void start_prefetch();
    // Unblocks every waiter; wait_ready() returns false afterwards.
    void stop();

    // Consumer side.
    bool wait_ready(std::uint64_t step);
    void release(std::uint64_t step);
    // Decodes order[step] from resident pages into `out`, then releases it.
    void get_sample(std::uint64_t step, Sample& out);

    bool resident(std::uint64_t page) const;
    // Heap bytes from resident pages; zero-copy when the region lies in one
    // page, otherwise gathered into `scratch`. Throws PageNotResident.
    std::span<const std::byte> view(std::uint64_t offset, std::uint64_t length,
                                    std::span<std::byte> scratch) const;

    CacheStats stats() const;

    // Stops the cache and hands its page buffers back for the next epoch.
    std::vector<TrackedBuffer> take_buffers();

private:
    void evict_locked(std::uint64_t page);
    void set_key_locked(std::uint64_t page, std::uint64_t next);

    const Dataset& dataset_;
    PageSchedule schedule_;
    std::vector<std::uint64_t> order_;
    std::uint64_t capacity_;
    std::uint64_t window_;

    std::vector<TrackedBuffer> buffers_;
    std::vector<std::size_t> free_buffers_;
    std::unique_ptr<std::atomic<std::int64_t>[]> slot_of_; // page -> buffer, -1 if absent

    mutable std::mutex mutex_;
    std::condition_variable changed_;
    std::set<std::pair<std::uint64_t, std::uint64_t>> by_next_use_; // (next use, page)
    std::vector<std::uint64_t> key_;
    std::vector<std::uint32_t> pending_;
    std::vector<std::uint64_t> remaining_;
    std::vector<bool> loaded_before_;
    std::vector<std::uint32_t> fetched_for_step_;
    std::vector<bool> released_;
    std::uint64_t ready_upto_ = 0;
    std::uint64_t low_ = 0;
    std::uint64_t ahead_ = 0;
    std::uint64_t resident_count_ = 0;
    bool stopped_ = false;
    CacheStats stats_;

    std::thread driver_;
};

} // namespace bbox
