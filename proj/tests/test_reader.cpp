#include "bbox/cache.hpp"
#include "bbox/error.hpp"
#include "bbox/reader.hpp"
#include "bbox/traversal.hpp"
#include "bbox/writer.hpp"
#include "support/expect.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <numeric>

using namespace bbox;
using namespace bbox::testing;

namespace {

// One VAR_BYTES blob per 64 KiB page: sample i lives alone on page i.
std::filesystem::path one_per_page(const TempDir& dir, std::size_t pages) {
    SplitMix64 rng(pages);
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < pages; ++i) {
        samples.push_back(Sample{BytesValue{random_bytes(rng, 40000)}});
    }
    InMemorySource src({FieldDescriptor::var_bytes("b")}, samples);
    WriterConfig cfg;
    cfg.page_size = kMinPageSize;
    const auto path = dir / ("pages" + std::to_string(pages) + ".bbox");
    write_dataset(src, cfg, path);
    return path;
}

} // namespace

TEST_SUITE("reader") {

TEST_CASE("open errors") {
    TempDir dir;
    CHECK(code_of([&] { Dataset ds(dir / "missing.bbox"); }) == Errc::Io);
    const auto path = one_per_page(dir, 2);
    CHECK(code_of([&] { Dataset ds(path, ReadStrategy::process_cache(0)); }) == Errc::CapacityTooSmall);
}

TEST_CASE("round trip, addressing, filter") {
    TempDir dir;
    SplitMix64 rng(10);
    auto samples = mixed_samples(rng, 300, kMinPageSize, 40);
    InMemorySource src(mixed_schema(), samples);
    WriterConfig cfg;
    cfg.page_size = kMinPageSize;
    cfg.compress_probability = 0.5;
    write_dataset(src, cfg, dir / "m.bbox");

    for (ReadStrategy st : {ReadStrategy::os_cache(), ReadStrategy::direct()}) {
        Dataset ds(dir / "m.bbox", st);
        REQUIRE(ds.num_samples() == samples.size());
        Sample s;
        for (std::uint64_t i = 0; i < ds.num_samples(); ++i) {
            ds.get_sample(i, s);
            REQUIRE(s == samples[i]);
            // Repeated reads return identical values.
            REQUIRE(ds.get_sample(i) == s);
        }
        CHECK(code_of([&] { ds.get_sample(ds.num_samples()); }) == Errc::IndexOutOfRange);
        CHECK(code_of([&] { ds.row_bytes(ds.num_samples()); }) == Errc::IndexOutOfRange);
        const auto width = ds.layout().width();
        CHECK(ds.row_bytes(7).size() == width);
    }

    // Filter over labels.
    auto labelled = labelled_images(500, 8, 8, 1, 3);
    InMemorySource lsrc(image_schema(8, 8, 1), labelled);
    write_dataset(lsrc, cfg, dir / "l.bbox");
    Dataset ds(dir / "l.bbox");
    for (std::int64_t k = 0; k < 10; ++k) {
        std::vector<std::uint64_t> expect;
        for (std::size_t i = 0; i < labelled.size(); ++i) {
            if (std::get<std::int64_t>(labelled[i][0]) == k) {
                expect.push_back(i);
            }
        }
        CHECK(ds.filter("label", [k](const Cell& c) { return std::get<std::int64_t>(c) == k; }) == expect);
    }
}

TEST_CASE("two OS-cache handles see identical bytes") {
    TempDir dir;
    SyntheticSource src({200, 16, 16, 3, 10, 1});
    write_dataset(src, {}, dir / "s.bbox");
    Dataset a(dir / "s.bbox");
    Dataset b(dir / "s.bbox");
    for (std::uint64_t i = 0; i < 200; ++i) {
        REQUIRE(a.get_sample(i) == b.get_sample(i));
    }
}

TEST_CASE("sequential schedule fetches each page once") {
    TempDir dir;
    const auto path = one_per_page(dir, 20);
    Dataset ds(path, ReadStrategy::process_cache(8));
    std::vector<std::uint64_t> order(20);
    std::iota(order.begin(), order.end(), 0);
    ProcessCache cache(ds, order, 8, 8);
    const auto stats = cache.run_schedule([&](std::uint64_t, std::uint64_t) {});
    CHECK(stats.fetch_count == 20);
    CHECK(stats.reload_count == 0);
    CHECK(stats.peak_resident <= 8);
}

TEST_CASE("process cache serves the same bytes as the file") {
    TempDir dir;
    SplitMix64 rng(14);
    auto samples = mixed_samples(rng, 200, kMinPageSize, 20);
    InMemorySource src(mixed_schema(), samples);
    WriterConfig cfg;
    cfg.page_size = kMinPageSize;
    write_dataset(src, cfg, dir / "m.bbox");
    Dataset ds(dir / "m.bbox", ReadStrategy::process_cache(6));
    const auto order = epoch_order(OrderKind::Random, 4, 0, ds.num_samples(), {}, 1);
    ProcessCache cache(ds, order, 6, 4);
    cache.start_prefetch();
    Sample s;
    for (std::uint64_t step = 0; step < order.size(); ++step) {
        REQUIRE(cache.wait_ready(step));
        cache.get_sample(step, s);
        REQUIRE(s == samples[order[step]]);
    }
    CHECK(cache.stats().peak_resident <= 6);
}

TEST_CASE("quasi-random order with batch_size pages of cache never reloads") {
    TempDir dir;
    SyntheticSource src({3000, 32, 32, 3, 10, 2});
    WriterConfig cfg;
    cfg.page_size = kMinPageSize;
    write_dataset(src, cfg, dir / "q.bbox");
    for (std::uint64_t batch : {1u, 2u, 4u, 8u}) {
        Dataset ds(dir / "q.bbox", ReadStrategy::process_cache(batch));
        const auto order = epoch_order(OrderKind::QuasiRandom, 9, 0, ds.num_samples(), ds.traversal_page_map(), batch);
        ProcessCache cache(ds, order, batch, 8);
        const auto stats = cache.run_schedule([](std::uint64_t, std::uint64_t) {});
        CHECK(stats.reload_count == 0);
        CHECK(stats.fetch_count == ds.num_pages());
    }
}

TEST_CASE("random trace of 12 accesses over 6 pages matches farthest-next-use") {
    TempDir dir;
    const auto path = one_per_page(dir, 6);
    SplitMix64 rng(99);
    for (int t = 0; t < 200; ++t) {
        std::vector<std::uint64_t> trace(12);
        for (auto& p : trace) {
            p = rng.below(6);
        }
        const std::uint64_t cap = 1 + rng.below(5);
        Dataset ds(path, ReadStrategy::process_cache(cap));
        ProcessCache cache(ds, trace, cap, 8);
        const auto got = cache.run_schedule([](std::uint64_t, std::uint64_t) {});
        std::vector<std::vector<std::uint64_t>> steps;
        for (auto p : trace) {
            steps.push_back({p});
        }
        const auto want = belady_sim(steps, cap);
        REQUIRE(got.fetch_count == want.fetches);
        REQUIRE(got.reload_count == want.reloads);
        REQUIRE(got.reload_count <= lru_sim(trace, cap).reloads);
        REQUIRE(got.peak_resident <= cap);
    }
}

TEST_CASE("non-resident pages are a contract violation") {
    TempDir dir;
    const auto path = one_per_page(dir, 4);
    Dataset ds(path, ReadStrategy::process_cache(2));
    std::vector<std::uint64_t> order{0, 1, 2, 3};
    ProcessCache cache(ds, order, 2, 8);
    const auto ref = std::get<BytesRef>(ds.cell(3, 0));
    std::vector<std::byte> scratch(ref.length);
    CHECK(code_of([&] { cache.view(ref.offset, ref.length, scratch); }) == Errc::PageNotResident);
    CHECK(code_of([&] {
              std::vector<std::uint64_t> o{0};
              ProcessCache c(ds, o, 0, 8);
          }) == Errc::CapacityTooSmall);
}

TEST_CASE("page map and pages of a sample") {
    TempDir dir;
    const auto path = one_per_page(dir, 5);
    Dataset ds(path);
    const auto map = ds.traversal_page_map();
    REQUIRE(map.size() == 5);
    for (std::uint64_t i = 0; i < 5; ++i) {
        CHECK(map[i] == i);
        std::vector<std::uint64_t> pages;
        ds.pages_of_sample(i, pages);
        CHECK(pages == std::vector<std::uint64_t>{i});
    }
}

TEST_CASE("injected latency is counted per physical read") {
    TempDir dir;
    const auto path = one_per_page(dir, 5);
    ReadStrategy st = ReadStrategy::process_cache(5);
    st.read_latency = std::chrono::microseconds(2000);
    Dataset ds(path, st);
    std::vector<std::uint64_t> order{0, 1, 2, 3, 4, 0, 1};
    ProcessCache cache(ds, order, 5, 8);
    cache.run_schedule([](std::uint64_t, std::uint64_t) {});
    const IoStats io = ds.io_stats();
    CHECK(io.physical_reads == 5);
    CHECK(io.latency_ns >= 5 * 2'000'000ull);
    CHECK(io.read_ns >= io.latency_ns);
}

} // TEST_SUITE
