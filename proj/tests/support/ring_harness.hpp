#pragma once

#include "bbox/random.hpp"
#include "bbox/error.hpp"
#include "bbox/ring.hpp"

#include <atomic>
#include <chrono>
#include <deque>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace bbox::testing {

struct ModelCheckResult {
    std::uint64_t states = 0;
    std::uint64_t transitions = 0;
    std::string violation; // empty when every invariant held
};

// Exhaustive exploration of the ring state machine for `slots` slots and
// batches [0, batches). Every interleaving of fill/finish/consume/release
// is explored.
inline ModelCheckResult ring_model_check(std::size_t slots, std::uint64_t batches) {
    ModelCheckResult r;
    const auto key = [&](const RingState& s) {
        std::vector<std::uint64_t> k{s.producer_cursor(), s.consumer_cursor()};
        for (std::size_t i = 0; i < s.slot_count(); ++i) {
            k.push_back(static_cast<std::uint64_t>(s.state(i)));
            k.push_back(s.batch_in(i));
        }
        return k;
    };
    const auto check = [&](const RingState& s) -> std::string {
        if (s.producer_cursor() < s.consumer_cursor()) return "consumer ahead of producer";
        if (s.producer_cursor() - s.consumer_cursor() > slots) return "more batches open than slots";
        if (s.in_flight() > slots) return "slot overcommitted";
        std::size_t consuming = 0;
        for (std::size_t i = 0; i < slots; ++i) {
            if (s.state(i) == SlotState::Free) continue;
            const std::uint64_t b = s.batch_in(i);
            if (b % slots != i) return "batch in the wrong slot";
            if (b < s.consumer_cursor() || b >= s.producer_cursor()) return "slot holds a stale batch";
            if (s.state(i) == SlotState::Consuming) {
                ++consuming;
                if (b != s.consumer_cursor()) return "consuming out of order";
            }
        }
        if (consuming > 1) return "two batches consumed at once";
        return {};
    };

    std::set<std::vector<std::uint64_t>> seen;
    std::deque<RingState> queue;
    queue.emplace_back(slots);
    seen.insert(key(queue.back()));
    while (!queue.empty()) {
        const RingState s = queue.front();
        queue.pop_front();
        ++r.states;
        if (auto v = check(s); !v.empty()) {
            r.violation = v;
            return r;
        }
        std::vector<RingState> next;
        for (std::uint64_t b = 0; b < batches; ++b) {
            RingState t = s;
            const auto res = t.try_begin_fill(b);
            const bool slot_free = s.state(b % slots) == SlotState::Free;
            if (res == RingState::Fill::Opened) {
                if (b != s.producer_cursor() || !slot_free) {
                    r.violation = "opened a batch out of turn";
                    return r;
                }
                next.push_back(t);
            } else {
                if (!(t == s)) {
                    r.violation = "a refused fill changed the state";
                    return r;
                }
                if (res == RingState::Fill::Passed && b >= s.producer_cursor()) {
                    r.violation = "an unopened batch reported as passed";
                    return r;
                }
                if (res == RingState::Fill::Blocked && b == s.producer_cursor() && slot_free) {
                    r.violation = "the next batch blocked on a free slot";
                    return r;
                }
            }
        }
        for (std::size_t i = 0; i < slots; ++i) {
            if (s.state(i) == SlotState::Filling) {
                RingState t = s;
                t.finish_fill(i);
                next.push_back(t);
            }
            if (s.state(i) == SlotState::Consuming) {
                RingState t = s;
                t.end_consume(i);
                next.push_back(t);
            }
        }
        if (s.consumer_cursor() < batches) {
            RingState t = s;
            if (auto slot = t.try_begin_consume()) {
                if (s.state(*slot) != SlotState::Ready || s.batch_in(*slot) != s.consumer_cursor()) {
                    r.violation = "consumed a batch that was not the next READY one";
                    return r;
                }
                next.push_back(t);
            }
        }
        if (next.empty() && s.consumer_cursor() < batches) {
            r.violation = "deadlock before every batch was consumed";
            return r;
        }
        for (auto& t : next) {
            ++r.transitions;
            if (seen.insert(key(t)).second) {
                queue.push_back(std::move(t));
            }
        }
    }
    return r;
}

struct RingStressResult {
    std::uint64_t consumed = 0;
    std::string violation;
};

inline std::uint64_t stress_value(std::uint64_t batch, std::uint64_t pos) {
    return mix_keys({batch, pos});
}

// Workers cooperate on batches of `positions` entries through a shared
// frontier, the consumer checks every value. `jitter` inserts random
// yields and short sleeps on both sides.
inline RingStressResult ring_stress(std::size_t slots, unsigned workers, std::uint64_t batches,
                                    std::uint32_t positions, bool jitter, std::uint64_t seed = 1) {
    RingStressResult result;
    BatchRing ring(slots);
    std::vector<std::vector<std::uint64_t>> data(slots, std::vector<std::uint64_t>(positions));
    std::unique_ptr<std::atomic<std::uint32_t>[]> writes(new std::atomic<std::uint32_t>[batches]);
    for (std::uint64_t b = 0; b < batches; ++b) {
        writes[b] = 0;
    }
    std::atomic<std::uint64_t> frontier{0};

    const auto pause = [](SplitMix64& rng) {
        const auto r = rng.below(64);
        if (r == 0) {
            std::this_thread::sleep_for(std::chrono::microseconds(rng.below(20)));
        } else if (r < 8) {
            std::this_thread::yield();
        }
    };

    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            SplitMix64 rng(mix_keys({seed, w}));
            try {
                for (;;) {
                    std::uint64_t b = frontier.load();
                    if (b >= batches) {
                        return;
                    }
                    const auto slot = ring.begin_fill(b, positions);
                    if (slot) {
                        while (auto pos = ring.claim(*slot, b)) {
                            if (jitter) pause(rng);
                            data[*slot][*pos] = stress_value(b, *pos);
                            writes[b].fetch_add(1);
                            ring.complete(*slot);
                        }
                    }
                    frontier.compare_exchange_strong(b, b + 1);
                }
            } catch (const Error&) {
            }
        });
    }

    SplitMix64 rng(seed);
    for (std::uint64_t b = 0; b < batches && result.violation.empty(); ++b) {
        const std::size_t slot = ring.begin_consume();
        if (ring.snapshot().batch_in(slot) != b) {
            result.violation = "batch " + std::to_string(b) + " delivered out of order";
        }
        if (writes[b].load() != positions) {
            result.violation = "batch " + std::to_string(b) + " delivered before it was complete";
        }
        for (std::uint32_t p = 0; p < positions; ++p) {
            if (data[slot][p] != stress_value(b, p)) {
                result.violation = "batch " + std::to_string(b) + " has a corrupted entry";
                break;
            }
        }
        if (jitter) pause(rng);
        ring.end_consume(slot);
        ++result.consumed;
    }
    ring.shutdown();
    for (auto& t : threads) {
        t.join();
    }
    for (std::uint64_t b = 0; b < batches && result.violation.empty(); ++b) {
        if (writes[b].load() != positions) {
            result.violation = "batch " + std::to_string(b) + " written " +
                               std::to_string(writes[b].load()) + " times";
        }
    }
    return result;
}

} // namespace bbox::testing
