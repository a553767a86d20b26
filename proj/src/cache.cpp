#include "bbox/cache.hpp"

#include "bbox/error.hpp"
#include "bbox/reader.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_map>

namespace bbox {

//------------------------------------------------------------------------------
// PageSchedule

PageSchedule::PageSchedule(const std::vector<std::vector<std::uint64_t>>& pages_per_step,
                           std::uint64_t num_pages)
    : num_pages_(num_pages),
      first_use_(num_pages, kNeverUsed),
      total_uses_(num_pages, 0) {
    step_begin_.reserve(pages_per_step.size() + 1);
    step_begin_.push_back(0);
    for (const auto& pages : pages_per_step) {
        const std::size_t begin = refs_.size();
        refs_.insert(refs_.end(), pages.begin(), pages.end());
        std::sort(refs_.begin() + static_cast<std::ptrdiff_t>(begin), refs_.end());
        refs_.erase(std::unique(refs_.begin() + static_cast<std::ptrdiff_t>(begin), refs_.end()),
                    refs_.end());
        step_begin_.push_back(refs_.size());
    }
    index();
}

PageSchedule::PageSchedule(std::vector<std::size_t> step_begin, std::vector<std::uint64_t> refs,
                           std::uint64_t num_pages)
    : num_pages_(num_pages),
      step_begin_(std::move(step_begin)),
      refs_(std::move(refs)),
      first_use_(num_pages, kNeverUsed),
      total_uses_(num_pages, 0) {
    index();
}

void PageSchedule::index() {
    for (std::size_t step = 0; step < num_steps(); ++step) {
        max_per_step_ = std::max(max_per_step_, step_begin_[step + 1] - step_begin_[step]);
    }
    next_use_.assign(refs_.size(), kNeverUsed);
    std::vector<std::uint64_t> upcoming(num_pages_, kNeverUsed);
    for (std::size_t step = num_steps(); step-- > 0;) {
        for (std::size_t r = step_begin_[step]; r < step_begin_[step + 1]; ++r) {
            const std::uint64_t page = refs_[r];
            if (page >= num_pages_) {
                fail(Errc::IndexOutOfRange, "schedule references page beyond the heap");
            }
            next_use_[r] = upcoming[page];
            upcoming[page] = step;
            ++total_uses_[page];
        }
    }
    for (std::size_t step = 0; step < num_steps(); ++step) {
        for (std::size_t r = step_begin_[step]; r < step_begin_[step + 1]; ++r) {
            if (first_use_[refs_[r]] == kNeverUsed) {
                first_use_[refs_[r]] = step;
                first_use_order_.push_back(refs_[r]);
            }
        }
    }
}

PageSchedule PageSchedule::for_order(const Dataset& dataset, std::span<const std::uint64_t> order) {
    std::vector<std::size_t> step_begin;
    std::vector<std::uint64_t> refs;
    step_begin.reserve(order.size() + 1);
    refs.reserve(order.size());
    step_begin.push_back(0);
    for (const std::uint64_t sample : order) {
        const auto pages = dataset.sample_pages(sample);
        refs.insert(refs.end(), pages.begin(), pages.end());
        step_begin.push_back(refs.size());
    }
    return PageSchedule(std::move(step_begin), std::move(refs), dataset.num_pages());
}

std::span<const std::uint64_t> PageSchedule::pages(std::size_t step) const {
    return std::span<const std::uint64_t>(refs_).subspan(step_begin_[step],
                                                         step_begin_[step + 1] - step_begin_[step]);
}

std::uint64_t PageSchedule::next_use(std::size_t step, std::size_t k) const {
    return next_use_[step_begin_[step] + k];
}

std::size_t PageSchedule::max_pages_per_batch(std::size_t batch_size) const {
    std::size_t best = 0;
    std::vector<std::uint64_t> seen;
    for (std::size_t b = 0; b < num_steps(); b += batch_size) {
        seen.clear();
        const std::size_t end = std::min(num_steps(), b + batch_size);
        seen.insert(seen.end(), refs_.begin() + static_cast<std::ptrdiff_t>(step_begin_[b]),
                    refs_.begin() + static_cast<std::ptrdiff_t>(step_begin_[end]));
        std::sort(seen.begin(), seen.end());
        best = std::max<std::size_t>(
            best, static_cast<std::size_t>(std::unique(seen.begin(), seen.end()) - seen.begin()));
    }
    return best;
}

//------------------------------------------------------------------------------
// ProcessCache

ProcessCache::ProcessCache(const Dataset& dataset, std::span<const std::uint64_t> order,
                           std::uint64_t capacity_pages, std::uint64_t window_pages,
                           MemoryTracker* tracker, std::vector<TrackedBuffer> pool)
    : ProcessCache(dataset, PageSchedule::for_order(dataset, order), capacity_pages, window_pages,
                   tracker, std::move(pool)) {
    order_.assign(order.begin(), order.end());
}

ProcessCache::ProcessCache(const Dataset& dataset, PageSchedule schedule,
                           std::uint64_t capacity_pages, std::uint64_t window_pages,
                           MemoryTracker* tracker, std::vector<TrackedBuffer> pool)
    : dataset_(dataset),
      schedule_(std::move(schedule)),
      capacity_(capacity_pages),
      window_(std::max<std::uint64_t>(1, window_pages)) {
    if (capacity_ == 0 || capacity_ < schedule_.max_pages_per_step()) {
        fail(Errc::CapacityTooSmall, "cache capacity " + std::to_string(capacity_) +
                                         " is below the pages one sample needs (" +
                                         std::to_string(schedule_.max_pages_per_step()) + ")");
    }
    const std::uint64_t num_pages = schedule_.num_pages();
    const std::uint64_t wanted = std::min(capacity_, std::max<std::uint64_t>(num_pages, 1));
    for (auto& b : pool) {
        if (buffers_.size() < wanted && b.size() >= dataset_.page_size()) {
            buffers_.push_back(std::move(b));
        }
    }
    while (buffers_.size() < wanted) {
        buffers_.emplace_back(dataset_.page_size(), tracker);
    }
    for (std::size_t b = buffers_.size(); b-- > 0;) {
        free_buffers_.push_back(b);
    }
    slot_of_ = std::make_unique<std::atomic<std::int64_t>[]>(num_pages);
    for (std::uint64_t p = 0; p < num_pages; ++p) {
        slot_of_[p].store(-1);
    }
    key_.assign(num_pages, kNeverUsed);
    pending_.assign(num_pages, 0);
    remaining_.resize(num_pages);
    for (std::uint64_t p = 0; p < num_pages; ++p) {
        remaining_[p] = schedule_.total_uses(p);
    }
    loaded_before_.assign(num_pages, false);
    fetched_for_step_.assign(schedule_.num_steps(), 0);
    released_.assign(schedule_.num_steps(), false);
}

ProcessCache::~ProcessCache() {
    stop();
    if (driver_.joinable()) {
        driver_.join();
    }
}

std::vector<TrackedBuffer> ProcessCache::take_buffers() {
    stop();
    if (driver_.joinable()) {
        driver_.join();
    }
    std::lock_guard lock(mutex_);
    for (std::uint64_t p = 0; p < schedule_.num_pages(); ++p) {
        slot_of_[p].store(-1);
    }
    free_buffers_.clear();
    return std::move(buffers_);
}

void ProcessCache::set_key_locked(std::uint64_t page, std::uint64_t next) {
    by_next_use_.erase({key_[page], page});
    key_[page] = next;
    by_next_use_.insert({next, page});
}

void ProcessCache::evict_locked(std::uint64_t page) {
    by_next_use_.erase({key_[page], page});
    key_[page] = kNeverUsed;
    free_buffers_.push_back(static_cast<std::size_t>(slot_of_[page].load()));
    slot_of_[page].store(-1);
    --resident_count_;
}

void ProcessCache::ensure(std::uint64_t step) {
    std::unique_lock lock(mutex_);
    if (step != ready_upto_ || step >= schedule_.num_steps()) {
        fail(Errc::InvalidConfig, "steps must be made ready in schedule order");
    }
    const auto pages = schedule_.pages(step);
    for (std::size_t k = 0; k < pages.size(); ++k) {
        const std::uint64_t page = pages[k];
        const std::uint64_t next = schedule_.next_use(step, k);
        if (slot_of_[page].load() >= 0) {
            set_key_locked(page, next);
            ++pending_[page];
            continue;
        }
        changed_.wait(lock, [&] { return stopped_ || ahead_ < window_ || low_ >= step; });
        for (;;) {
            if (stopped_) {
                fail(Errc::Shutdown, "cache stopped");
            }
            if (resident_count_ < capacity_ && !free_buffers_.empty()) {
                break;
            }
            // Farthest next use among pages the current step does not need.
            std::uint64_t victim = kNeverUsed;
            for (auto it = by_next_use_.rbegin(); it != by_next_use_.rend(); ++it) {
                if (!std::binary_search(pages.begin(), pages.end(), it->second)) {
                    victim = it->second;
                    break;
                }
            }
            if (victim != kNeverUsed && pending_[victim] == 0) {
                evict_locked(victim);
                continue;
            }
            changed_.wait(lock);
        }
        const std::size_t slot = free_buffers_.back();
        free_buffers_.pop_back();
        ++pending_[page];
        lock.unlock();
        try {
            dataset_.read_page(page, buffers_[slot].span());
        } catch (...) {
            lock.lock();
            --pending_[page];
            free_buffers_.push_back(slot);
            throw;
        }
        lock.lock();
        slot_of_[page].store(static_cast<std::int64_t>(slot));
        ++resident_count_;
        set_key_locked(page, next);
        ++stats_.fetch_count;
        if (loaded_before_[page]) {
            ++stats_.reload_count;
        }
        loaded_before_[page] = true;
        ++fetched_for_step_[step];
        ++ahead_;
        stats_.peak_resident = std::max(stats_.peak_resident, resident_count_);
    }
    ready_upto_ = step + 1;
    changed_.notify_all();
}

void ProcessCache::release(std::uint64_t step) {
    std::lock_guard lock(mutex_);
    if (step >= ready_upto_ || released_[step]) {
        fail(Errc::InvalidConfig, "release of a step that is not ready or already released");
    }
    for (const std::uint64_t page : schedule_.pages(step)) {
        --pending_[page];
        --remaining_[page];
        if (remaining_[page] == 0 && pending_[page] == 0 && slot_of_[page].load() >= 0) {
            evict_locked(page);
        }
    }
    released_[step] = true;
    while (low_ < ready_upto_ && released_[low_]) {
        ahead_ -= fetched_for_step_[low_];
        ++low_;
    }
    changed_.notify_all();
}

bool ProcessCache::wait_ready(std::uint64_t step) {
    std::unique_lock lock(mutex_);
    changed_.wait(lock, [&] { return stopped_ || ready_upto_ > step; });
    return ready_upto_ > step;
}

void ProcessCache::start_prefetch() {
    if (driver_.joinable()) {
        return;
    }
    driver_ = std::thread([this] {
        try {
            for (std::uint64_t s = 0; s < schedule_.num_steps(); ++s) {
                ensure(s);
            }
        } catch (const Error&) {
            // Shutdown; waiters observe stopped_.
        }
    });
}

void ProcessCache::stop() {
    {
        std::lock_guard lock(mutex_);
        stopped_ = true;
    }
    changed_.notify_all();
}

bool ProcessCache::resident(std::uint64_t page) const {
    return page < schedule_.num_pages() && slot_of_[page].load() >= 0;
}

std::span<const std::byte> ProcessCache::view(std::uint64_t offset, std::uint64_t length,
                                              std::span<std::byte> scratch) const {
    const std::uint64_t page_size = dataset_.page_size();
    const std::uint64_t first = dataset_.page_of(offset);
    const std::uint64_t last = dataset_.page_of(offset + length - 1);
    const auto buffer_of = [&](std::uint64_t page) -> const TrackedBuffer& {
        const std::int64_t slot = page < schedule_.num_pages() ? slot_of_[page].load() : -1;
        if (slot < 0) {
            fail(Errc::PageNotResident, "page " + std::to_string(page) + " is not resident");
        }
        return buffers_[static_cast<std::size_t>(slot)];
    };
    const std::uint64_t in_page = (offset - dataset_.heap_offset()) % page_size;
    if (first == last) {
        return buffer_of(first).span().subspan(in_page, length);
    }
    if (scratch.size() < length) {
        fail(Errc::InvalidConfig, "scratch buffer too small for a multi-page blob");
    }
    std::uint64_t done = 0;
    for (std::uint64_t p = first; p <= last; ++p) {
        const std::uint64_t from = p == first ? in_page : 0;
        const std::uint64_t n = std::min(page_size - from, length - done);
        std::memcpy(scratch.data() + done, buffer_of(p).data() + from, n);
        done += n;
    }
    return scratch.first(length);
}

void ProcessCache::get_sample(std::uint64_t step, Sample& out) {
    if (step >= order_.size()) {
        fail(Errc::IndexOutOfRange, "step beyond the scheduled order");
    }
    const std::uint64_t sample = order_[step];
    out.resize(dataset_.schema().size());
    std::vector<std::byte> scratch;
    for (std::size_t f = 0; f < dataset_.schema().size(); ++f) {
        dataset_.decode_field(sample, f, out[f], scratch, this);
    }
    release(step);
}

CacheStats ProcessCache::run_schedule(
    const std::function<void(std::uint64_t step, std::uint64_t sample)>& consume) {
    for (std::uint64_t s = 0; s < schedule_.num_steps(); ++s) {
        ensure(s);
        consume(s, s < order_.size() ? order_[s] : s);
        release(s);
    }
    return stats();
}

CacheStats ProcessCache::stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
}

} // namespace bbox
