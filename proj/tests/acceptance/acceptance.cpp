#include "bbox/bench.hpp"
#include "bbox/cache.hpp"
#include "bbox/codecs.hpp"
#include "bbox/loader.hpp"
#include "bbox/reader.hpp"
#include "bbox/traversal.hpp"
#include "bbox/writer.hpp"
#include "support/alloc_counter.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"
#include "support/pipeline_harness.hpp"
#include "support/ring_harness.hpp"
#include "support/table.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace bbox;
using namespace bbox::testing;
using namespace std::chrono_literals;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;

    // Keeps the first failure message.
    void require(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) {
                detail = what;
            }
            pass = false;
        }
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

//------------------------------------------------------------------------------

Outcome format_round_trip() {
    Outcome o;
    const auto t0 = Clock::now();
    TempDir dir;
    SplitMix64 rng(2024);
    std::uint64_t checked = 0;
    std::array<std::uint64_t, 3> codecs{};
    for (std::uint64_t page : {kMinPageSize, kDefaultPageSize}) {
        const auto samples = mixed_samples(rng, 10000, page == kMinPageSize ? page : 0, 200);
        InMemorySource src(mixed_schema(), samples);
        WriterConfig cfg;
        cfg.page_size = page;
        cfg.compress_probability = 0.5;
        cfg.compressed_codec = CodecId::Rle;
        cfg.num_encode_workers = 4;
        cfg.seed = page;
        const auto path = dir / ("rt" + std::to_string(page) + ".bbox");
        const auto report = write_dataset(src, cfg, path);
        for (std::size_t c = 0; c < 3; ++c) {
            codecs[c] += report.codec_counts[c];
        }
        const auto v = validate_file(path);
        o.require(v.ok(), "validate: " + (v.ok() ? std::string() : v.violations.front().kind));
        Dataset ds(path);
        o.require(ds.num_samples() == samples.size(), "sample count differs");
        Sample s;
        for (std::uint64_t i = 0; i < ds.num_samples() && o.pass; ++i) {
            ds.get_sample(i, s);
            o.require(s == samples[i], "sample " + std::to_string(i) + " differs at page size " +
                                           std::to_string(page));
            ++checked;
        }
    }
    const double secs = seconds_since(t0);
    o.require(codecs[0] > 0 && codecs[1] > 0, "both lossless codecs must be exercised");
    o.require(secs < 60.0, "runtime " + fmt("%.1f", secs) + " s exceeds 60 s");
    if (o.pass) {
        o.detail = std::to_string(checked) + " samples bit-identical (raw " + std::to_string(codecs[0]) +
                   ", rle " + std::to_string(codecs[1]) + ") in " + fmt("%.1f", secs) + " s";
    }
    return o;
}

Outcome allocation_oracle() {
    Outcome o;
    TempDir dir;
    SplitMix64 rng(77);
    const Schema schema{FieldDescriptor::var_bytes("a"), FieldDescriptor::fixed_array("v", Dtype::F32, {4}),
                        FieldDescriptor::var_bytes("b")};
    std::uint64_t blobs = 0;
    std::uint64_t oversize = 0;
    for (int trace = 0; trace < 1000 && o.pass; ++trace) {
        const std::size_t n = rng.below(41);
        std::vector<Sample> samples;
        for (std::size_t i = 0; i < n; ++i) {
            Sample s;
            for (int f = 0; f < 3; ++f) {
                if (f == 1) {
                    s.emplace_back(FixedArrayValue{random_bytes(rng, 16)});
                    continue;
                }
                std::size_t len = rng.below(6000);
                if (rng.below(10) == 0) {
                    len = 0;
                } else if (rng.below(25) == 0) {
                    len = kMinPageSize + rng.below(3 * kMinPageSize);
                    ++oversize;
                }
                s.emplace_back(BytesValue{random_bytes(rng, len)});
            }
            samples.push_back(std::move(s));
        }
        InMemorySource src(schema, samples);
        WriterConfig cfg;
        cfg.page_size = kMinPageSize;
        const auto path = dir / "t.bbox";
        const auto report = write_dataset(src, cfg, path);
        Dataset ds(path);
        RefBumpAllocator ref{ds.heap_offset(), ds.page_size()};
        for (const Region& r : blob_regions(ds)) {
            ++blobs;
            if (ref.allocate(r.length) != r.offset) {
                o.require(false, "trace " + std::to_string(trace) + ": offset differs from the reference");
                break;
            }
        }
        o.require(ds.num_pages() == ref.next_page, "trace " + std::to_string(trace) + ": page count differs");
        const double table = waste_from_table(ds);
        o.require(report_waste(path) == table, "trace " + std::to_string(trace) + ": reported waste differs");
        o.require(report.waste_fraction == table, "trace " + std::to_string(trace) + ": write report waste differs");
    }
    if (o.pass) {
        o.detail = "1000 traces, " + std::to_string(blobs) + " blobs (" + std::to_string(oversize) +
                   " oversize) match; waste exact";
    }
    return o;
}

Outcome traversal_coverage() {
    Outcome o;
    SplitMix64 rng(5150);
    std::uint64_t epochs = 0;
    for (int cfg = 0; cfg < 1000 && o.pass; ++cfg) {
        const std::uint64_t n = rng.below(5001);
        const std::uint64_t batch = 1 + rng.below(64);
        const std::uint64_t seed = rng.next();
        // Contiguous pages of random fill, like a written file.
        std::vector<std::uint64_t> map(n);
        std::uint64_t page = 0, left = 1 + rng.below(200);
        for (auto& p : map) {
            if (left == 0) {
                ++page;
                left = 1 + rng.below(200);
            }
            p = page;
            --left;
        }
        const std::set<std::uint64_t> pages(map.begin(), map.end());
        for (OrderKind kind : {OrderKind::Sequential, OrderKind::Random, OrderKind::QuasiRandom}) {
            std::vector<QuasiEvent> trace;
            const auto order = epoch_order(kind, seed, rng.below(4), n, map, batch, &trace);
            ++epochs;
            std::vector<std::uint64_t> sorted = order;
            std::sort(sorted.begin(), sorted.end());
            bool perm = sorted.size() == n;
            for (std::uint64_t i = 0; perm && i < n; ++i) {
                perm = sorted[i] == i;
            }
            o.require(perm, "config " + std::to_string(cfg) + ": " + std::string(order_kind_name(kind)) +
                                " is not a permutation");
            if (kind != OrderKind::QuasiRandom) {
                continue;
            }
            const auto err = check_quasi_trace(order, map, batch, trace);
            o.require(err.empty(), "config " + std::to_string(cfg) + ": " + err);
            const auto loads = std::count_if(trace.begin(), trace.end(), [](const QuasiEvent& e) {
                return e.kind == QuasiEvent::Kind::Admit;
            });
            o.require(static_cast<std::size_t>(loads) == pages.size(),
                      "config " + std::to_string(cfg) + ": page loads " + std::to_string(loads) +
                          " != num_pages " + std::to_string(pages.size()));
        }
    }
    if (o.pass) {
        o.detail = std::to_string(epochs) + " epochs are permutations; quasi-random traces load each page once "
                                            "and buffer <= batch_size pages";
    }
    return o;
}

std::filesystem::path one_blob_per_page(const TempDir& dir, std::size_t pages) {
    SplitMix64 rng(pages);
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < pages; ++i) {
        samples.push_back(Sample{BytesValue{random_bytes(rng, 40000)}});
    }
    InMemorySource src({FieldDescriptor::var_bytes("b")}, samples);
    WriterConfig cfg;
    cfg.page_size = kMinPageSize;
    const auto path = dir / "pages.bbox";
    write_dataset(src, cfg, path);
    return path;
}

Outcome cache_optimality() {
    Outcome o;
    TempDir dir;
    const auto path = one_blob_per_page(dir, 64);
    Dataset ds(path, ReadStrategy::process_cache(64));
    if (ds.num_pages() != 64) {
        o.require(false, "fixture does not have one sample per page");
        return o;
    }
    SplitMix64 rng(4242);
    std::uint64_t total_reloads = 0, total_lru = 0, strictly_better = 0;
    for (int t = 0; t < 1000 && o.pass; ++t) {
        const std::uint64_t pages = 1 + rng.below(64);
        const std::size_t len = 1 + rng.below(512);
        const std::uint64_t cap = 1 + rng.below(pages);
        // Mix of uniform and looping access, so traces have reuse.
        std::vector<std::uint64_t> trace(len);
        const std::uint64_t loop = 1 + rng.below(pages);
        for (std::size_t i = 0; i < len; ++i) {
            trace[i] = rng.below(3) == 0 ? rng.below(pages) : (i % loop + rng.below(2)) % pages;
        }
        ProcessCache cache(ds, trace, cap, 1 + rng.below(16));
        const CacheStats got = cache.run_schedule([](std::uint64_t, std::uint64_t) {});
        std::vector<std::vector<std::uint64_t>> steps;
        for (auto p : trace) {
            steps.push_back({p});
        }
        const CacheCounts want = belady_sim(steps, cap);
        const CacheCounts lru = lru_sim(trace, cap);
        o.require(got.fetch_count == want.fetches && got.reload_count == want.reloads,
                  "trace " + std::to_string(t) + ": fetch/reload " + std::to_string(got.fetch_count) + "/" +
                      std::to_string(got.reload_count) + " vs Belady " + std::to_string(want.fetches) + "/" +
                      std::to_string(want.reloads));
        o.require(got.reload_count <= lru.reloads, "trace " + std::to_string(t) + ": more reloads than LRU");
        o.require(got.peak_resident <= cap, "trace " + std::to_string(t) + ": capacity exceeded");
        total_reloads += got.reload_count;
        total_lru += lru.reloads;
        strictly_better += got.reload_count < lru.reloads;
    }
    if (o.pass) {
        o.detail = "1000 traces equal Belady; reloads " + std::to_string(total_reloads) + " vs LRU " +
                   std::to_string(total_lru) + " (" + std::to_string(strictly_better) + " strictly fewer)";
    }
    return o;
}

Outcome pipeline_equivalence() {
    Outcome o;
    const auto structural = plan_pipeline(parse_pipeline("decode|flip:0.5|opaque_identity|crop:16,16"),
                                          harness_input_spec(), 8, 3);
    o.require(structural.stages.size() == 3, "[F,F,O,F] did not group into 3 stages");
    if (o.pass) {
        const auto& st = structural.stages;
        o.require(st[0].category == Category::Fusible && st[0].last == 2 && st[1].category == Category::Opaque &&
                      st[2].category == Category::Fusible && st[2].first == 3,
                  "[F,F,O,F] stage boundaries are wrong");
    }
    std::uint64_t seed = 1;
    std::size_t cases = 0;
    for (const auto& pc : pipeline_cases()) {
        const auto err = check_pipeline_case(pc, 1000, seed++);
        o.require(err.empty(), err);
        ++cases;
    }
    // raw: stored payload bytes, shape (length, 1, 1).
    for (const char* text : {"raw", "raw|opaque_identity|flip:1"}) {
        PipelineExecutor exec(plan_pipeline(parse_pipeline(text), harness_input_spec(), 8, 2));
        SplitMix64 rng(seed++);
        for (int b = 0; b < 125 && o.pass; ++b) {
            std::vector<ImageBlob> blobs;
            exec.begin_batch(b % 2);
            for (std::size_t pos = 0; pos < 8; ++pos) {
                blobs.push_back(harness_image(rng));
                exec.execute_sample(b % 2, pos, encoded_view(blobs.back()), rng.next());
            }
            exec.execute_batch_opaque(b % 2, 8);
            for (std::size_t pos = 0; pos < 8; ++pos) {
                const auto out = exec.output(b % 2, pos);
                const auto& p = blobs[pos].payload;
                // A 1-pixel-wide flip is the identity.
                o.require(out.shape.height == p.size() && out.shape.width == 1 &&
                              std::equal(p.begin(), p.end(), out.data.begin()),
                          std::string(text) + ": output differs from the payload");
            }
        }
        ++cases;
    }
    if (o.pass) {
        o.detail = std::to_string(cases) + " compositions x 1000 samples bit-exact; [F,F,O,F] -> 3 stages";
    }
    return o;
}

std::filesystem::path image_dataset(const TempDir& dir, const std::string& name, std::size_t n, std::uint16_t side,
                                    bool vary, std::uint64_t page_size = kMinPageSize) {
    const auto samples = labelled_images(n, side, side, 3, n + side, vary);
    InMemorySource src(image_schema(side, side, 3), samples);
    WriterConfig cfg;
    cfg.page_size = page_size;
    cfg.compress_probability = 0.5;
    cfg.num_encode_workers = 2;
    const auto path = dir / name;
    write_dataset(src, cfg, path);
    return path;
}

Outcome steady_state_allocations() {
    Outcome o;
    TempDir dir;
    const auto path = image_dataset(dir, "s.bbox", 8000, 16, true);
    for (ReadMode mode : {ReadMode::OsCache, ReadMode::ProcessCache}) {
        Dataset ds(path, mode == ReadMode::OsCache ? ReadStrategy::os_cache() : ReadStrategy::process_cache(8));
        LoaderConfig cfg;
        cfg.batch_size = 8;
        cfg.num_workers = 4;
        cfg.order = OrderKind::Random;
        cfg.pipeline = "decode|flip:0.5|resize:12,12|crop:8,8|opaque_identity|normalize:127.5,64";
        Loader loader(ds, cfg);
        loader.start_epoch();
        if (!loader.next()) {
            o.require(false, "no first batch");
            return o;
        }
        const auto before = pipeline_allocations();
        std::uint64_t batches = 1;
        while (loader.next()) {
            ++batches;
        }
        const auto extra = pipeline_allocations() - before;
        o.require(batches == 1000, "expected 1000 batches, got " + std::to_string(batches));
        o.require(extra == 0, std::to_string(extra) + " pipeline allocations after batch 1");
    }
    if (o.pass) {
        o.detail = "0 pipeline allocations over batches 2..1000 (os-cache and process-cache)";
    }
    return o;
}

struct Delivered {
    std::vector<std::uint64_t> indices;
    std::vector<std::int64_t> labels;
    std::vector<std::byte> values;
    bool operator==(const Delivered&) const = default;
};

std::vector<Delivered> run_epoch(Loader& loader) {
    std::vector<Delivered> out;
    loader.start_epoch();
    while (auto b = loader.next()) {
        Delivered d;
        d.indices.assign(b->indices.begin(), b->indices.end());
        d.labels.assign(b->labels.begin(), b->labels.end());
        for (std::size_t p = 0; p < b->size; ++p) {
            const auto bytes = b->sample_bytes(p);
            d.values.insert(d.values.end(), bytes.begin(), bytes.end());
        }
        out.push_back(std::move(d));
    }
    return out;
}

Outcome ring_loader_safety() {
    Outcome o;
    std::ostringstream detail;
    std::uint64_t states = 0;
    for (std::size_t s = 1; s <= 3; ++s) {
        const auto r = ring_model_check(s, 3 * s + 3);
        o.require(r.violation.empty(), "model check S=" + std::to_string(s) + ": " + r.violation);
        states += r.states;
    }
    detail << "model check S<=3 (" << states << " states) clean";

    const auto t0 = Clock::now();
    const auto stress = ring_stress(3, 4, 100000, 4, true, 99);
    o.require(stress.violation.empty(), "stress: " + stress.violation);
    o.require(stress.consumed == 100000, "stress: consumed " + std::to_string(stress.consumed));
    detail << "; 1e5-batch jitter stress ok in " << fmt("%.1f", seconds_since(t0)) << " s";

    TempDir dir;
    const auto path = image_dataset(dir, "r.bbox", 3000, 16, true);
    std::uint64_t runs = 0;
    for (OrderKind order : {OrderKind::Random, OrderKind::QuasiRandom}) {
        for (std::uint32_t batch : {1u, 7u, 32u}) {
            std::vector<std::vector<Delivered>> per_workers;
            for (std::uint32_t w : {1u, 2u, 8u}) {
                Dataset ds(path, ReadStrategy::process_cache(std::max<std::uint32_t>(batch, 2)));
                LoaderConfig cfg;
                cfg.batch_size = batch;
                cfg.num_workers = w;
                cfg.order = order;
                cfg.seed = 31;
                cfg.pipeline = "decode|flip:0.5|resize:12,12|crop:10,10|normalize:127.5,64";
                Loader loader(ds, cfg);
                auto epoch = run_epoch(loader);
                std::vector<std::uint64_t> flat;
                for (const auto& d : epoch) {
                    flat.insert(flat.end(), d.indices.begin(), d.indices.end());
                }
                o.require(flat == std::vector<std::uint64_t>(loader.order().begin(), loader.order().end()),
                          "delivered sequence differs from the epoch order");
                std::sort(flat.begin(), flat.end());
                bool once = flat.size() == ds.num_samples();
                for (std::size_t i = 0; once && i < flat.size(); ++i) {
                    once = flat[i] == i;
                }
                o.require(once, "a sample was not delivered exactly once");
                per_workers.push_back(std::move(epoch));
                ++runs;
            }
            o.require(per_workers[0] == per_workers[1] && per_workers[0] == per_workers[2],
                      "batches differ across worker counts (order " + std::string(order_kind_name(order)) +
                          ", batch " + std::to_string(batch) + ")");
        }
    }
    detail << "; " << runs << " loader epochs exactly-once, identical for workers {1,2,8}";
    if (o.pass) {
        o.detail = detail.str();
    }
    return o;
}

Outcome constant_memory() {
    Outcome o;
    TempDir dir;
    const auto path = image_dataset(dir, "m.bbox", 4000, 32, false);
    std::ostringstream detail;
    for (std::uint32_t batch : {4u, 16u, 64u}) {
        std::uint64_t peak[2] = {0, 0};
        std::uint64_t slot = 0;
        int k = 0;
        for (std::uint32_t w : {1u, 8u}) {
            Dataset ds(path, ReadStrategy::process_cache(batch));
            LoaderConfig cfg;
            cfg.batch_size = batch;
            cfg.num_workers = w;
            cfg.order = OrderKind::QuasiRandom;
            cfg.pipeline = "decode|flip:0.5|normalize:127.5,64";
            Loader loader(ds, cfg);
            for (int e = 0; e < 2; ++e) {
                run_epoch(loader);
            }
            peak[k++] = loader.memory().peak_bytes();
            // Arena share plus label/index metadata of one slot.
            slot = std::max<std::uint64_t>(slot, loader.plan().slot_bytes + std::uint64_t{batch} * 16);
        }
        const std::uint64_t diff = peak[1] > peak[0] ? peak[1] - peak[0] : peak[0] - peak[1];
        o.require(diff <= slot, "batch " + std::to_string(batch) + ": peak W=8 " + std::to_string(peak[1]) +
                                    " vs W=1 " + std::to_string(peak[0]) + " differs by more than one slot (" +
                                    std::to_string(slot) + ")");
        detail << (batch == 4 ? "" : "; ") << "B=" << batch << " peak " << peak[0] << " vs " << peak[1]
               << " (slot " << slot << ")";
    }
    if (o.pass) {
        o.detail = detail.str();
    }
    return o;
}

Outcome bench_criterion() {
    Outcome o;
    const auto t0 = Clock::now();
    std::ostringstream detail;
    {
        // Latency arithmetic on 10^4 samples.
        TempDir dir;
        SyntheticSource synth({10000, 32, 32, 3, 10, 5});
        BenchInputs in{dir / "c.bbox", dir / "tree"};
        export_tree(synth, in.tree);
        write_dataset(DirectorySource(in.tree), {}, in.container);

        BenchScenario s;
        s.mode = BenchMode::ReadOnly;
        s.read_latency = 1ms;
        s.batch_size = 64;
        s.seed = 3;
        s.loader = LoaderKind::FilePerSample;
        const auto f = run_scenario(s, in);
        s.loader = LoaderKind::Container;
        const auto c = run_scenario(s, in);

        const double f_floor = 1e-3 * static_cast<double>(f.counters.samples);
        const double c_floor = 1e-3 * static_cast<double>(c.counters.num_pages);
        o.require(f.counters_stable && c.counters_stable, "counters differ between repetitions");
        o.require(f.counters.physical_reads == f.counters.samples, "file-per-sample reads != samples");
        o.require(c.counters.physical_reads == c.counters.num_pages, "container reads != num_pages");
        o.require(std::abs(f.median_latency_s - f_floor) <= 0.2 * f_floor,
                  "file-per-sample latency " + fmt("%.3f", f.median_latency_s) + " s vs floor " +
                      fmt("%.3f", f_floor) + " s");
        o.require(std::abs(c.median_latency_s - c_floor) <= 0.2 * c_floor,
                  "container latency " + fmt("%.4f", c.median_latency_s) + " s vs floor " + fmt("%.4f", c_floor) +
                      " s");
        o.require(f.median_wall_s >= 0.8 * f_floor && c.median_wall_s >= 0.8 * c_floor,
                  "wall time below the latency floor");
        detail << "file-per-sample latency " << fmt("%.3f", f.median_latency_s) << " s (floor "
               << fmt("%.3f", f_floor) << " s, wall " << fmt("%.3f", f.median_wall_s) << " s); container "
               << fmt("%.4f", c.median_latency_s) << " s (floor " << fmt("%.4f", c_floor) << " s, "
               << c.counters.num_pages << " pages)";
    }
    {
        // Throughput on 10^5 samples.
        TempDir dir;
        SyntheticSource synth({100000, 32, 32, 3, 10, 6});
        BenchInputs in{dir / "c.bbox", dir / "tree"};
        export_tree(synth, in.tree);
        write_dataset(DirectorySource(in.tree), {}, in.container);

        // The dataset fits in RAM, so the container reads through the OS cache.
        BenchScenario s;
        s.mode = BenchMode::ReadProcess;
        s.batch_size = 256;
        s.seed = 8;
        s.loader = LoaderKind::FilePerSample;
        const auto f = run_scenario(s, in);
        s.loader = LoaderKind::Container;
        s.read_mode = ReadMode::OsCache;
        const auto c = run_scenario(s, in);
        s.read_mode = ReadMode::ProcessCache;
        const auto p = run_scenario(s, in);
        const double ratio = c.samples_per_sec / f.samples_per_sec;
        o.require(f.counters.file_opens == 100000 && c.counters.file_opens == 1, "unexpected file open counts");
        o.require(f.counters.order_checksum == c.counters.order_checksum &&
                      p.counters.order_checksum == c.counters.order_checksum,
                  "loaders delivered different sequences");
        o.require(ratio >= 2.0, "container " + fmt("%.0f", c.samples_per_sec) + " samples/s vs file-per-sample " +
                                    fmt("%.0f", f.samples_per_sec) + " samples/s (ratio " + fmt("%.2f", ratio) +
                                    " < 2)");
        detail << "; 1e5 read-process: container " << fmt("%.0f", c.samples_per_sec) << " (os-cache) / "
               << fmt("%.0f", p.samples_per_sec) << " (process-cache) vs file-per-sample "
               << fmt("%.0f", f.samples_per_sec) << " samples/s (x" << fmt("%.2f", ratio) << " / x"
               << fmt("%.2f", p.samples_per_sec / f.samples_per_sec) << ")";
    }
    const double secs = seconds_since(t0);
    o.require(secs < 600.0, "runtime " + fmt("%.0f", secs) + " s exceeds 10 min");
    detail << "; " << fmt("%.0f", secs) << " s";
    if (o.pass) {
        o.detail = detail.str();
    } else {
        o.detail += " [" + detail.str() + "]";
    }
    return o;
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"format-round-trip", format_round_trip},
        {"allocation-oracle", allocation_oracle},
        {"traversal-coverage", traversal_coverage},
        {"cache-optimality", cache_optimality},
        {"pipeline-equivalence", pipeline_equivalence},
        {"steady-state-allocations", steady_state_allocations},
        {"ring-loader-safety", ring_loader_safety},
        {"constant-memory", constant_memory},
        {"bench-latency-throughput", bench_criterion},
    };
    std::set<std::string> only;
    for (int i = 1; i < argc; ++i) {
        only.insert(argv[i]);
    }
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        if (!only.empty() && !only.count(name)) {
            continue;
        }
        Outcome o;
        const auto t0 = Clock::now();
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        std::printf("%s %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
