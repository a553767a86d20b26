#include "bbox/error.hpp"
#include "bbox/ring.hpp"
#include "support/expect.hpp"
#include "support/ring_harness.hpp"

#include <doctest.h>

#include <thread>

using namespace bbox;
using namespace bbox::testing;

TEST_SUITE("ring") {

TEST_CASE("a single slot alternates between producer and consumer") {
    RingState s(1);
    CHECK(s.try_begin_fill(0) == RingState::Fill::Opened);
    CHECK(s.try_begin_fill(0) == RingState::Fill::Joined);
    CHECK(s.try_begin_fill(1) == RingState::Fill::Blocked);
    CHECK_FALSE(s.try_begin_consume().has_value());
    s.finish_fill(0);
    CHECK(s.try_begin_fill(1) == RingState::Fill::Blocked);
    CHECK(s.try_begin_fill(0) == RingState::Fill::Passed);
    REQUIRE(s.try_begin_consume() == std::optional<std::size_t>{0});
    CHECK(s.try_begin_fill(1) == RingState::Fill::Blocked);
    s.end_consume(0);
    CHECK(s.try_begin_fill(1) == RingState::Fill::Opened);
    CHECK(s.state(0) == SlotState::Filling);
    CHECK(s.batch_in(0) == 1);
}

TEST_CASE("four ready slots block the producer until one is consumed") {
    BatchRing ring(4);
    for (int b = 0; b < 4; ++b) {
        auto lease = ring.produce();
        CHECK(lease.batch() == static_cast<std::uint64_t>(b));
    }
    const RingState snap = ring.snapshot();
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(snap.state(i) == SlotState::Ready);
    }
    CHECK(RingState(snap).try_begin_fill(4) == RingState::Fill::Blocked);

    std::atomic<bool> produced{false};
    std::thread producer([&] {
        auto lease = ring.produce();
        produced = true;
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    CHECK_FALSE(produced.load());
    {
        auto c = ring.consume();
        CHECK(c.batch() == 0);
    }
    producer.join();
    CHECK(produced.load());
    CHECK(ring.producer_blocked_ns() >= 40'000'000ull);
    CHECK(ring.snapshot().batch_in(0) == 4);
}

TEST_CASE("shutdown wakes blocked threads") {
    BatchRing ring(2);
    std::thread consumer([&] { CHECK(code_of([&] { ring.begin_consume(); }) == Errc::Shutdown); });
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    ring.shutdown();
    consumer.join();
    CHECK(ring.is_shutdown());
    CHECK(code_of([&] { ring.begin_fill(0, 1); }) == Errc::Shutdown);
    ring.reset();
    CHECK_FALSE(ring.is_shutdown());
    CHECK(ring.begin_fill(0, 1) == std::optional<std::size_t>{0});
}

TEST_CASE("batch claims are tagged by batch") {
    BatchFill fill;
    fill.open(7, 3);
    CHECK_FALSE(fill.claim(6).has_value());
    CHECK(fill.claim(7) == std::optional<std::uint32_t>{0});
    CHECK(fill.claim(7) == std::optional<std::uint32_t>{1});
    CHECK(fill.claim(7) == std::optional<std::uint32_t>{2});
    CHECK_FALSE(fill.claim(7).has_value());
    CHECK_FALSE(fill.complete_one());
    CHECK_FALSE(fill.complete_one());
    CHECK(fill.complete_one());
    fill.open(8, 1);
    CHECK_FALSE(fill.claim(7).has_value());
    CHECK(fill.claim(8).has_value());
}

TEST_CASE("exhaustive model check for small rings") {
    for (std::size_t slots = 1; slots <= 3; ++slots) {
        const auto r = ring_model_check(slots, 2 * slots + 2);
        CAPTURE(slots);
        CHECK(r.violation == "");
        CHECK(r.states > 1);
    }
}

TEST_CASE("concurrent fill and consume deliver every value once") {
    for (unsigned workers : {1u, 2u, 8u}) {
        for (std::size_t slots : {1u, 2u, 4u}) {
            const auto r = ring_stress(slots, workers, 2000, 5, true, workers * 10 + slots);
            CAPTURE(workers);
            CAPTURE(slots);
            CHECK(r.violation == "");
            CHECK(r.consumed == 2000);
        }
    }
}

TEST_CASE("invalid use") {
    CHECK(code_of([] { RingState s(0); }) == Errc::InvalidConfig);
    RingState s(2);
    CHECK(code_of([&] { s.finish_fill(0); }) == Errc::InvalidConfig);
    CHECK(code_of([&] { s.end_consume(0); }) == Errc::InvalidConfig);
    BatchRing ring(2);
    CHECK(code_of([&] { ring.begin_fill(0, 0); }) == Errc::InvalidConfig);
}

} // TEST_SUITE
