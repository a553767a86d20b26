#include "bbox/bench.hpp"

#include "bbox/codecs.hpp"
#include "bbox/endian.hpp"
#include "bbox/error.hpp"
#include "bbox/io.hpp"
#include "bbox/transforms.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace bbox {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
    if (v.empty()) {
        return 0;
    }
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::uint64_t fold(std::uint64_t h, std::uint64_t v) { return mix64(h ^ v); }

} // namespace

BenchMode parse_bench_mode(std::string_view text) {
    if (text == "read-only" || text == "read_only") return BenchMode::ReadOnly;
    if (text == "read-process" || text == "read_process") return BenchMode::ReadProcess;
    if (text == "full-loop" || text == "full_loop") return BenchMode::FullLoop;
    fail(Errc::InvalidConfig, "unknown bench mode '" + std::string(text) + "'");
}

std::string_view bench_mode_name(BenchMode mode) {
    switch (mode) {
    case BenchMode::ReadOnly: return "read-only";
    case BenchMode::ReadProcess: return "read-process";
    case BenchMode::FullLoop: return "full-loop";
    }
    return "?";
}

LoaderKind parse_loader_kind(std::string_view text) {
    if (text == "container") return LoaderKind::Container;
    if (text == "file-per-sample" || text == "file_per_sample") return LoaderKind::FilePerSample;
    fail(Errc::InvalidConfig, "unknown loader '" + std::string(text) + "'");
}

std::string_view loader_kind_name(LoaderKind kind) {
    return kind == LoaderKind::Container ? "container" : "file-per-sample";
}

void busy_wait(std::chrono::nanoseconds d) {
    const auto until = Clock::now() + d;
    while (Clock::now() < until) {
    }
}

//------------------------------------------------------------------------------
// FilePerSampleLoader

FilePerSampleLoader::FilePerSampleLoader(const std::filesystem::path& root, FilePerSampleConfig config)
    : source_(root), config_(std::move(config)) {
    if (config_.batch_size == 0 || config_.num_workers == 0) {
        fail(Errc::InvalidConfig, "batch_size and num_workers must be positive");
    }
    transforms_ = config_.transforms.empty() ? parse_pipeline(config_.pipeline) : config_.transforms;
    const ImageParams& params = source_.schema()[1].image();
    TensorSpec spec{ElemType::Encoded, params.max_height, params.max_width, params.channels,
                    std::uint64_t{params.max_height} * params.max_width * params.channels};
    specs_.push_back(spec);
    for (const auto& t : transforms_) {
        specs_.push_back(t->output_spec(specs_.back()));
    }
}

FilePerSampleLoader::~FilePerSampleLoader() { shutdown(); }

void FilePerSampleLoader::start_epoch() {
    stop_workers();
    order_ = epoch_order(config_.order, config_.seed, epoch_, source_.size(), {}, config_.batch_size);
    steps_ = config_.drop_last ? order_.size() / config_.batch_size * config_.batch_size : order_.size();
    num_batches_ = ceil_div(steps_, config_.batch_size);
    consumed_ = 0;
    ++epoch_;
    {
        std::lock_guard lock(mutex_);
        stop_ = false;
        done_.clear();
    }
    for (std::uint32_t w = 0; w < config_.num_workers; ++w) {
        workers_.emplace_back([this, w] { worker_main(w); });
    }
}

void FilePerSampleLoader::worker_main(std::uint32_t id) {
    const std::uint64_t ahead = 2ull * config_.num_workers;
    for (std::uint64_t b = id; b < num_batches_; b += config_.num_workers) {
        {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [&] { return stop_ || b < consumed_ + ahead; });
            if (stop_) {
                return;
            }
        }
        std::string error;
        OwnedBatch batch = build_batch(b, error);
        std::lock_guard lock(mutex_);
        done_.emplace(b, std::make_pair(std::move(batch), std::move(error)));
        cv_.notify_all();
    }
}

OwnedBatch FilePerSampleLoader::build_batch(std::uint64_t b, std::string& error) {
    OwnedBatch out;
    out.index = b;
    out.size = std::min<std::uint64_t>(config_.batch_size, steps_ - b * config_.batch_size);
    out.spec = specs_.back();
    out.stride = align_up(out.spec.bytes(), 64);
    out.data.assign(out.stride * out.size, std::byte{0});
    out.shapes.resize(out.size);
    out.labels.resize(out.size);
    out.indices.resize(out.size);

    for (std::size_t pos = 0; pos < out.size; ++pos) {
        const std::uint64_t sample = order_[b * config_.batch_size + pos];
        const auto& entry = source_.entries()[sample];
        out.indices[pos] = sample;
        out.labels[pos] = entry.label;
        try {
            std::vector<std::byte> bytes;
            {
                File f(entry.path, File::Mode::Read);
                opens_.fetch_add(1);
                bytes.resize(f.size());
                if (config_.read_latency.count() > 0) {
                    latency_ns_.fetch_add(static_cast<std::uint64_t>(inject_latency(config_.read_latency).count()));
                }
                f.read_at(0, bytes);
                reads_.fetch_add(1);
                bytes_.fetch_add(bytes.size());
            }
            if (bytes.size() < kRasterHeaderBytes) {
                fail(Errc::CorruptPayload, "raster truncated");
            }
            const std::uint32_t h = load_le<std::uint32_t>(bytes, 0);
            const std::uint32_t w = load_le<std::uint32_t>(bytes, 4);
            const std::uint32_t c = load_le<std::uint32_t>(bytes, 8);
            const std::uint64_t n = std::uint64_t{h} * w * c;
            if (bytes.size() != kRasterHeaderBytes + n) {
                fail(Errc::CorruptPayload, "raster length mismatch");
            }
            ConstTensorView cur{ElemType::Encoded, Shape{h, w, c, CodecId::Raw, n},
                                std::span<const std::byte>(bytes).subspan(kRasterHeaderBytes)};
            SplitMix64 rng(mix_keys({config_.seed, epoch_ - 1, sample}));
            std::vector<std::byte> held;
            for (std::size_t k = 0; k < transforms_.size(); ++k) {
                std::vector<std::byte> fresh(specs_[k + 1].bytes());
                TensorView v{specs_[k + 1].type, {}, fresh};
                transforms_[k]->apply(cur, v, rng);
                held = std::move(fresh);
                cur = ConstTensorView{v.type, v.shape, std::span<const std::byte>(held).first(v.data.size())};
            }
            const std::uint64_t used = cur.used_bytes();
            std::copy_n(cur.data.begin(), used, out.data.begin() + static_cast<std::ptrdiff_t>(pos * out.stride));
            out.shapes[pos] = cur.shape;
        } catch (const std::exception& e) {
            if (error.empty()) {
                error = "position " + std::to_string(pos) + " (sample " + std::to_string(sample) +
                        "): " + e.what();
            }
        }
    }
    return out;
}

std::optional<OwnedBatch> FilePerSampleLoader::next() {
    if (consumed_ >= num_batches_) {
        stop_workers();
        return std::nullopt;
    }
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return stop_ || done_.count(consumed_) != 0; });
    if (stop_) {
        fail(Errc::Shutdown, "loader shut down");
    }
    auto node = done_.extract(consumed_);
    ++consumed_;
    cv_.notify_all();
    lock.unlock();
    if (!node.mapped().second.empty()) {
        fail(Errc::SampleFailed, "batch " + std::to_string(node.key()) + " " + node.mapped().second);
    }
    return std::move(node.mapped().first);
}

void FilePerSampleLoader::stop_workers() {
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
        cv_.notify_all();
    }
    for (auto& t : workers_) {
        t.join();
    }
    workers_.clear();
}

void FilePerSampleLoader::shutdown() { stop_workers(); }

FileIoCounters FilePerSampleLoader::counters() const {
    return {opens_.load(), reads_.load(), bytes_.load(), latency_ns_.load()};
}

//------------------------------------------------------------------------------
// Scenarios

void check_scenario(const BenchScenario& s) {
    if (s.repetitions < 3) {
        fail(Errc::InvalidConfig, "repetitions must be at least 3");
    }
    if (s.batch_size == 0 || s.num_workers == 0) {
        fail(Errc::InvalidConfig, "batch_size and num_workers must be positive");
    }
    if (s.compute_per_batch.count() < 0 || s.read_latency.count() < 0) {
        fail(Errc::InvalidConfig, "durations must be non-negative");
    }
    if (s.loader == LoaderKind::FilePerSample && s.order == OrderKind::QuasiRandom) {
        fail(Errc::InvalidConfig, "quasi-random order needs a paged container");
    }
}

namespace {

std::string effective_pipeline(const BenchScenario& s) {
    return s.mode == BenchMode::ReadOnly ? std::string("raw") : s.pipeline;
}

BenchRun run_container(const BenchScenario& s, const BenchInputs& in) {
    std::uint64_t num_pages;
    {
        Dataset probe(in.container);
        num_pages = probe.num_pages();
    }
    ReadStrategy strategy;
    strategy.mode = s.read_mode;
    strategy.read_latency = s.read_latency;
    strategy.prefetch_window = s.prefetch_window;
    if (s.read_mode == ReadMode::ProcessCache) {
        strategy.capacity_pages = s.cache_pages != 0
                                      ? s.cache_pages
                                      : std::max<std::uint64_t>(1, std::min<std::uint64_t>(num_pages, s.batch_size));
    }
    Dataset ds(in.container, strategy);
    LoaderConfig cfg;
    cfg.batch_size = s.batch_size;
    cfg.num_workers = s.num_workers;
    cfg.order = s.order;
    cfg.seed = s.seed;
    cfg.pipeline = effective_pipeline(s);
    Loader loader(ds, cfg);

    BenchRun run;
    run.counters.num_pages = num_pages;
    std::uint64_t checksum = 0;
    const auto t0 = Clock::now();
    loader.start_epoch();
    while (auto batch = loader.next()) {
        for (std::size_t i = 0; i < batch->size; ++i) {
            checksum = fold(checksum, batch->indices[i] * 0x100000001b3ULL + static_cast<std::uint64_t>(batch->labels[i]));
        }
        if (s.mode == BenchMode::FullLoop) {
            busy_wait(s.compute_per_batch);
        }
    }
    run.wall_s = seconds_since(t0);
    const EpochStats st = loader.stats();
    run.counters.samples = st.samples;
    run.counters.batches = st.batches;
    run.counters.page_fetches = st.page_fetches;
    run.counters.page_reloads = st.page_reloads;
    run.counters.physical_reads = st.physical_reads;
    run.counters.bytes_read = st.bytes_read;
    run.counters.file_opens = 1;
    run.counters.order_checksum = checksum;
    run.latency_s = static_cast<double>(st.latency_ns) * 1e-9;
    run.producer_blocked_s = static_cast<double>(st.producer_blocked_ns) * 1e-9;
    run.consumer_blocked_s = static_cast<double>(st.consumer_blocked_ns) * 1e-9;
    return run;
}

BenchRun run_file_per_sample(const BenchScenario& s, const BenchInputs& in) {
    if (in.tree.empty()) {
        fail(Errc::InvalidConfig, "file-per-sample loader needs a directory tree");
    }
    FilePerSampleConfig cfg;
    cfg.batch_size = s.batch_size;
    cfg.num_workers = s.num_workers;
    cfg.order = s.order;
    cfg.seed = s.seed;
    cfg.pipeline = effective_pipeline(s);
    cfg.read_latency = s.read_latency;
    FilePerSampleLoader loader(in.tree, cfg);

    BenchRun run;
    std::uint64_t checksum = 0;
    const auto t0 = Clock::now();
    loader.start_epoch();
    while (auto batch = loader.next()) {
        ++run.counters.batches;
        run.counters.samples += batch->size;
        for (std::size_t i = 0; i < batch->size; ++i) {
            checksum = fold(checksum, batch->indices[i] * 0x100000001b3ULL + static_cast<std::uint64_t>(batch->labels[i]));
        }
        if (s.mode == BenchMode::FullLoop) {
            busy_wait(s.compute_per_batch);
        }
    }
    run.wall_s = seconds_since(t0);
    const FileIoCounters io = loader.counters();
    run.counters.physical_reads = io.reads;
    run.counters.bytes_read = io.bytes_read;
    run.counters.file_opens = io.file_opens;
    run.counters.order_checksum = checksum;
    run.latency_s = static_cast<double>(io.latency_ns) * 1e-9;
    return run;
}

} // namespace

BenchReport run_scenario(const BenchScenario& scenario, const BenchInputs& inputs) {
    check_scenario(scenario);
    BenchReport report;
    report.scenario = scenario;
    std::vector<double> wall, latency, pblock, cblock;
    for (std::uint32_t r = 0; r < scenario.repetitions; ++r) {
        BenchRun run = scenario.loader == LoaderKind::Container ? run_container(scenario, inputs)
                                                                : run_file_per_sample(scenario, inputs);
        wall.push_back(run.wall_s);
        latency.push_back(run.latency_s);
        pblock.push_back(run.producer_blocked_s);
        cblock.push_back(run.consumer_blocked_s);
        if (r == 0) {
            report.counters = run.counters;
        } else if (!(run.counters == report.counters)) {
            report.counters_stable = false;
        }
        report.runs.push_back(run);
    }
    report.median_wall_s = median(wall);
    report.median_latency_s = median(latency);
    report.median_producer_blocked_s = median(pblock);
    report.median_consumer_blocked_s = median(cblock);
    report.samples_per_sec =
        report.median_wall_s > 0 ? static_cast<double>(report.counters.samples) / report.median_wall_s : 0;
    return report;
}

std::string BenchReport::name() const {
    return std::string(loader_kind_name(scenario.loader)) + "/" + std::string(bench_mode_name(scenario.mode));
}

nlohmann::json BenchReport::to_json() const {
    nlohmann::json j;
    j["scenario"] = {
        {"name", name()},
        {"mode", bench_mode_name(scenario.mode)},
        {"loader", loader_kind_name(scenario.loader)},
        {"compute_per_batch_us", scenario.compute_per_batch.count()},
        {"read_latency_us", scenario.read_latency.count()},
        {"repetitions", scenario.repetitions},
        {"batch_size", scenario.batch_size},
        {"num_workers", scenario.num_workers},
        {"order", order_kind_name(scenario.order)},
        {"seed", scenario.seed},
        {"pipeline", effective_pipeline(scenario)},
    };
    j["counters"] = {
        {"samples", counters.samples},
        {"batches", counters.batches},
        {"num_pages", counters.num_pages},
        {"page_fetches", counters.page_fetches},
        {"page_reloads", counters.page_reloads},
        {"physical_reads", counters.physical_reads},
        {"bytes_read", counters.bytes_read},
        {"file_opens", counters.file_opens},
        {"order_checksum", counters.order_checksum},
        {"stable", counters_stable},
    };
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : this->runs) {
        runs.push_back({{"wall_s", r.wall_s},
                        {"latency_s", r.latency_s},
                        {"producer_blocked_s", r.producer_blocked_s},
                        {"consumer_blocked_s", r.consumer_blocked_s}});
    }
    j["timing"] = {
        {"median_wall_s", median_wall_s},
        {"samples_per_sec", samples_per_sec},
        {"median_latency_s", median_latency_s},
        {"median_producer_blocked_s", median_producer_blocked_s},
        {"median_consumer_blocked_s", median_consumer_blocked_s},
        {"runs", runs},
    };
    return j;
}

std::string BenchReport::to_text() const {
    std::ostringstream os;
    os << "scenario " << name() << "\n";
    os << "pipeline " << effective_pipeline(scenario) << "\n";
    os << "order " << order_kind_name(scenario.order) << " seed " << scenario.seed << "\n";
    os << "samples " << counters.samples << "\n";
    os << "batches " << counters.batches << "\n";
    os << "num_pages " << counters.num_pages << "\n";
    os << "page_fetches " << counters.page_fetches << "\n";
    os << "page_reloads " << counters.page_reloads << "\n";
    os << "physical_reads " << counters.physical_reads << "\n";
    os << "file_opens " << counters.file_opens << "\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "median_wall_s %.6f\n", median_wall_s);
    os << buf;
    std::snprintf(buf, sizeof buf, "samples_per_sec %.1f\n", samples_per_sec);
    os << buf;
    std::snprintf(buf, sizeof buf, "median_latency_s %.6f\n", median_latency_s);
    os << buf;
    std::snprintf(buf, sizeof buf, "median_producer_blocked_s %.6f\n", median_producer_blocked_s);
    os << buf;
    std::snprintf(buf, sizeof buf, "median_consumer_blocked_s %.6f\n", median_consumer_blocked_s);
    os << buf;
    return os.str();
}

} // namespace bbox
