#pragma once

#include "bbox/cache.hpp"
#include "bbox/memory.hpp"
#include "bbox/pipeline.hpp"
#include "bbox/reader.hpp"
#include "bbox/ring.hpp"
#include "bbox/traversal.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace bbox {

struct LoaderConfig {
    std::uint32_t batch_size = 64;
    std::uint32_t num_workers = 1;
    std::uint32_t slot_count = 0; // 0: default_slot_count()
    OrderKind order = OrderKind::Sequential;
    std::uint64_t seed = 0;
    std::string pipeline = "decode";
    // Used instead of `pipeline` when nonempty.
    std::vector<TransformPtr> transforms;
    std::string image_field = "image";
    // Empty: batches carry label -1.
    std::string label_field = "label";
    bool drop_last = false;
};

// 2 * ceil(workers / batch-fill parallelism), at least 3. A batch can keep
// min(workers, batch_size) workers busy.
std::uint32_t default_slot_count(std::uint32_t num_workers, std::uint32_t batch_size);
void check_loader_config(const LoaderConfig& config);

struct EpochStats {
    std::uint64_t epoch = 0;
    std::uint64_t batches = 0;
    std::uint64_t samples = 0;
    std::uint64_t page_fetches = 0;
    std::uint64_t page_reloads = 0;
    std::uint64_t physical_reads = 0;
    std::uint64_t bytes_read = 0;
    std::uint64_t latency_ns = 0;
    std::uint64_t producer_blocked_ns = 0;
    std::uint64_t consumer_blocked_ns = 0;
};

// A delivered batch. Valid until the next call to Loader::next().
struct BatchView {
    std::uint64_t epoch = 0;
    std::uint64_t index = 0;
    std::size_t size = 0;
    TensorSpec spec;         // per-sample upper bound
    std::uint64_t stride = 0; // bytes between samples in `data`
    std::span<const std::byte> data;
    std::span<const Shape> shapes;
    std::span<const std::int64_t> labels;
    std::span<const std::uint64_t> indices;

    // The used bytes of sample `pos`.
    std::span<const std::byte> sample_bytes(std::size_t pos) const {
        const std::uint64_t n = spec.type == ElemType::Encoded
                                    ? shapes[pos].length
                                    : shapes[pos].elements() * elem_size(spec.type);
        return data.subspan(pos * stride, n);
    }
    template <class T>
    std::span<const T> sample_as(std::size_t pos) const {
        auto b = sample_bytes(pos);
        return {reinterpret_cast<const T*>(b.data()), b.size() / sizeof(T)};
    }
};

// Runs epochs over a dataset: traversal order, page cache (PROCESS_CACHE),
// a worker pool filling ring slots in place, and the consumer iterator.
class Loader {
public:
    Loader(const Dataset& dataset, LoaderConfig config);
    // Owning form; shutdown() closes the dataset.
    Loader(std::shared_ptr<const Dataset> dataset, LoaderConfig config);
    ~Loader();

    Loader(const Loader&) = delete;
    Loader& operator=(const Loader&) = delete;

    const LoaderConfig& config() const noexcept { return config_; }
    const PipelinePlan& plan() const { return executor_->plan(); }
    const MemoryTracker& memory() const noexcept { return tracker_; }
    std::uint32_t slot_count() const noexcept { return slots_; }

    // Starts the next epoch; an unfinished one is abandoned. Throws Shutdown.
    void start_epoch();
    // Next batch of the running epoch; nullopt once the epoch is complete
    // (or when none was started). Throws SampleFailed for a batch holding a
    // failed sample; the epoch continues with the next batch.
    std::optional<BatchView> next();
    // Joins all workers and unblocks every wait. Idempotent.
    void shutdown();

    bool running() const noexcept { return running_; }
    std::uint64_t epochs_started() const noexcept { return epoch_; }
    std::uint64_t num_batches() const noexcept { return num_batches_; }
    std::span<const std::uint64_t> order() const noexcept { return order_; }
    EpochStats stats() const;
    std::size_t live_workers() const noexcept { return live_workers_.load(); }

private:
    void init();
    void worker_main();
    void fill_position(std::uint64_t batch, std::size_t slot, std::uint32_t pos);
    void stop_workers();
    void finish_epoch();
    std::uint32_t batch_length(std::uint64_t batch) const;

    std::shared_ptr<const Dataset> owned_;
    const Dataset* dataset_;
    LoaderConfig config_;
    std::uint32_t slots_ = 0;
    std::size_t image_field_ = 0;
    std::optional<std::size_t> label_field_;
    std::vector<std::uint64_t> page_map_;

    MemoryTracker tracker_;
    std::unique_ptr<PipelineExecutor> executor_;
    TrackedBuffer meta_; // labels then indices, [slot][position]
    BatchRing ring_;
    std::unique_ptr<ProcessCache> cache_;
    std::vector<TrackedBuffer> page_pool_; // process-cache pages, kept across epochs

    std::vector<std::uint64_t> order_;
    std::uint64_t steps_ = 0;
    std::uint64_t num_batches_ = 0;
    std::uint64_t epoch_ = 0;
    std::uint64_t consumed_ = 0;
    bool running_ = false;
    bool shutdown_ = false;
    bool lease_ = false;
    std::size_t lease_slot_ = 0;

    std::atomic<std::uint64_t> frontier_{0};
    std::atomic<bool> stop_{false};
    std::atomic<std::size_t> live_workers_{0};
    std::vector<std::thread> workers_;

    EpochStats stats_;
    IoStats io_base_;
};

// Runs one full epoch and hands every batch to `consume`.
EpochStats iterate_epoch(const Dataset& dataset, const LoaderConfig& config,
                         const std::function<void(const BatchView&)>& consume);

} // namespace bbox
