#pragma once

#include "bbox/loader.hpp"
#include "bbox/pipeline.hpp"
#include "bbox/reader.hpp"
#include "bbox/sample.hpp"
#include "bbox/traversal.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace bbox {

enum class BenchMode { ReadOnly, ReadProcess, FullLoop };
enum class LoaderKind { Container, FilePerSample };

BenchMode parse_bench_mode(std::string_view text);
std::string_view bench_mode_name(BenchMode mode);
LoaderKind parse_loader_kind(std::string_view text);
std::string_view loader_kind_name(LoaderKind kind);

//------------------------------------------------------------------------------
// Baseline: one raster file per sample, read and processed per sample.

struct FilePerSampleConfig {
    std::uint32_t batch_size = 64;
    std::uint32_t num_workers = 1;
    OrderKind order = OrderKind::Random;
    std::uint64_t seed = 0;
    std::string pipeline = "decode";
    std::vector<TransformPtr> transforms; // overrides `pipeline` when nonempty
    bool drop_last = false;
    // Added to every file read.
    std::chrono::microseconds read_latency{0};
};

struct OwnedBatch {
    std::uint64_t index = 0;
    std::size_t size = 0;
    TensorSpec spec;
    std::uint64_t stride = 0;
    std::vector<std::byte> data;
    std::vector<Shape> shapes;
    std::vector<std::int64_t> labels;
    std::vector<std::uint64_t> indices;

    std::span<const std::byte> sample_bytes(std::size_t pos) const {
        const std::uint64_t n = spec.type == ElemType::Encoded
                                    ? shapes[pos].length
                                    : shapes[pos].elements() * elem_size(spec.type);
        return std::span<const std::byte>(data).subspan(pos * stride, n);
    }
};

struct FileIoCounters {
    std::uint64_t file_opens = 0;
    std::uint64_t reads = 0;
    std::uint64_t bytes_read = 0;
    std::uint64_t latency_ns = 0;
};

// Conventional loader over a label/file tree: every sample is its own file,
// every transform writes a fresh buffer, and each worker assembles whole
// batches. Per-sample randomness matches Loader, so lossless data yields the
// same tensors.
class FilePerSampleLoader {
public:
    FilePerSampleLoader(const std::filesystem::path& root, FilePerSampleConfig config);
    ~FilePerSampleLoader();

    FilePerSampleLoader(const FilePerSampleLoader&) = delete;
    FilePerSampleLoader& operator=(const FilePerSampleLoader&) = delete;

    std::uint64_t num_samples() const noexcept { return source_.size(); }
    std::uint64_t num_batches() const noexcept { return num_batches_; }
    const std::vector<TransformPtr>& transforms() const noexcept { return transforms_; }

    void start_epoch();
    // Throws SampleFailed for a batch holding a failed sample.
    std::optional<OwnedBatch> next();
    void shutdown();
    FileIoCounters counters() const;

private:
    void worker_main(std::uint32_t id);
    OwnedBatch build_batch(std::uint64_t batch, std::string& error);
    void stop_workers();

    DirectorySource source_;
    FilePerSampleConfig config_;
    std::vector<TransformPtr> transforms_;
    std::vector<TensorSpec> specs_;

    std::vector<std::uint64_t> order_;
    std::uint64_t steps_ = 0;
    std::uint64_t num_batches_ = 0;
    std::uint64_t epoch_ = 0;
    std::uint64_t consumed_ = 0;

    std::mutex mutex_;
    std::condition_variable cv_;
    std::map<std::uint64_t, std::pair<OwnedBatch, std::string>> done_;
    bool stop_ = false;
    std::vector<std::thread> workers_;

    std::atomic<std::uint64_t> opens_{0};
    std::atomic<std::uint64_t> reads_{0};
    std::atomic<std::uint64_t> bytes_{0};
    std::atomic<std::uint64_t> latency_ns_{0};
};

//------------------------------------------------------------------------------
// Scenarios

struct BenchScenario {
    BenchMode mode = BenchMode::ReadProcess;
    LoaderKind loader = LoaderKind::Container;
    std::chrono::microseconds compute_per_batch{0}; // FULL_LOOP only
    std::chrono::microseconds read_latency{0};
    std::uint32_t repetitions = 3;

    std::uint32_t batch_size = 64;
    std::uint32_t num_workers = 1;
    OrderKind order = OrderKind::Random;
    std::uint64_t seed = 0;
    // READ_ONLY replaces this with a plain copy of the stored bytes.
    std::string pipeline = "decode|flip:0.5|normalize:127.5,64";
    // Container only.
    ReadMode read_mode = ReadMode::ProcessCache;
    std::uint64_t cache_pages = 0; // 0: min(num_pages, batch_size)
    std::uint64_t prefetch_window = 8;
};

void check_scenario(const BenchScenario& scenario);

struct BenchInputs {
    std::filesystem::path container;
    std::filesystem::path tree; // required for FILE_PER_SAMPLE
};

// Deterministic given scenario and seed.
struct BenchCounters {
    std::uint64_t samples = 0;
    std::uint64_t batches = 0;
    std::uint64_t num_pages = 0;
    std::uint64_t page_fetches = 0;
    std::uint64_t page_reloads = 0;
    std::uint64_t physical_reads = 0;
    std::uint64_t bytes_read = 0;
    std::uint64_t file_opens = 0;
    std::uint64_t order_checksum = 0;

    bool operator==(const BenchCounters&) const = default;
};

struct BenchRun {
    double wall_s = 0;
    double latency_s = 0; // time spent inside injected latency
    double producer_blocked_s = 0;
    double consumer_blocked_s = 0;
    BenchCounters counters;
};

struct BenchReport {
    BenchScenario scenario;
    std::vector<BenchRun> runs;
    BenchCounters counters;     // of the first run
    bool counters_stable = true; // every run produced the same counters
    double median_wall_s = 0;
    double samples_per_sec = 0;
    double median_latency_s = 0;
    double median_producer_blocked_s = 0;
    double median_consumer_blocked_s = 0;

    std::string name() const;
    nlohmann::json to_json() const;
    std::string to_text() const;
};

BenchReport run_scenario(const BenchScenario& scenario, const BenchInputs& inputs);

// Busy-waits for `d` (stands in for model compute).
void busy_wait(std::chrono::nanoseconds d);

} // namespace bbox
