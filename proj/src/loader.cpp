#include "bbox/loader.hpp"

#include "bbox/endian.hpp"
#include "bbox/error.hpp"

#include <algorithm>
#include <cstring>

namespace bbox {

namespace {

std::uint32_t resolve_slots(const LoaderConfig& c) {
    check_loader_config(c);
    return c.slot_count != 0 ? c.slot_count : default_slot_count(c.num_workers, c.batch_size);
}

} // namespace

std::uint32_t default_slot_count(std::uint32_t num_workers, std::uint32_t batch_size) {
    const std::uint32_t w = std::max<std::uint32_t>(num_workers, 1);
    const std::uint32_t parallel = std::max<std::uint32_t>(std::min(w, batch_size), 1);
    return std::max<std::uint32_t>(3, 2 * static_cast<std::uint32_t>(ceil_div(w, parallel)));
}

void check_loader_config(const LoaderConfig& c) {
    if (c.batch_size == 0 || c.batch_size > BatchFill::kMaxPositions) {
        fail(Errc::InvalidConfig, "batch_size must be in [1, 2^24)");
    }
    if (c.num_workers == 0) {
        fail(Errc::InvalidConfig, "num_workers must be at least 1");
    }
    if (c.slot_count == 1) {
        fail(Errc::InvalidConfig, "slot_count must be at least 2");
    }
    if (c.transforms.empty() && c.pipeline.empty()) {
        fail(Errc::InvalidConfig, "empty pipeline");
    }
}

Loader::Loader(const Dataset& dataset, LoaderConfig config)
    : dataset_(&dataset), config_(std::move(config)), slots_(resolve_slots(config_)), ring_(slots_) {
    init();
}

Loader::Loader(std::shared_ptr<const Dataset> dataset, LoaderConfig config)
    : owned_(std::move(dataset)),
      dataset_(owned_.get()),
      config_(std::move(config)),
      slots_(resolve_slots(config_)),
      ring_(slots_) {
    if (dataset_ == nullptr) {
        fail(Errc::InvalidConfig, "loader needs a dataset");
    }
    init();
}

void Loader::init() {
    const Dataset& ds = *dataset_;
    auto image = ds.field_index(config_.image_field);
    if (!image || ds.schema()[*image].kind != FieldKind::Image) {
        fail(Errc::InvalidConfig, "no image field named '" + config_.image_field + "'");
    }
    image_field_ = *image;
    if (!config_.label_field.empty()) {
        auto label = ds.field_index(config_.label_field);
        if (!label || ds.schema()[*label].kind != FieldKind::IntScalar) {
            fail(Errc::InvalidConfig, "no integer field named '" + config_.label_field + "'");
        }
        label_field_ = *label;
    }
    page_map_ = ds.traversal_page_map();

    const ImageParams& params = ds.schema()[image_field_].image();
    std::uint64_t max_payload = 1;
    for (std::uint64_t i = 0; i < ds.num_samples(); ++i) {
        max_payload = std::max(max_payload, std::get<ImageRef>(ds.cell(i, image_field_)).length);
    }
    const TensorSpec input{ElemType::Encoded, params.max_height, params.max_width, params.channels, max_payload};

    std::vector<TransformPtr> transforms =
        config_.transforms.empty() ? parse_pipeline(config_.pipeline) : config_.transforms;
    const bool staging = ds.strategy().mode != ReadMode::OsCache;
    executor_ = std::make_unique<PipelineExecutor>(
        plan_pipeline(std::move(transforms), input, config_.batch_size, slots_, staging), &tracker_);
    meta_ = TrackedBuffer(std::size_t{slots_} * config_.batch_size * 16, &tracker_);
    if (ds.strategy().mode == ReadMode::ProcessCache) {
        const std::uint64_t pages =
            std::min(ds.strategy().capacity_pages, std::max<std::uint64_t>(ds.num_pages(), 1));
        for (std::uint64_t p = 0; p < pages; ++p) {
            page_pool_.emplace_back(ds.page_size(), &tracker_);
        }
    }
}

Loader::~Loader() { shutdown(); }

std::uint32_t Loader::batch_length(std::uint64_t batch) const {
    const std::uint64_t begin = batch * config_.batch_size;
    return static_cast<std::uint32_t>(std::min<std::uint64_t>(config_.batch_size, steps_ - begin));
}

void Loader::start_epoch() {
    if (shutdown_) {
        fail(Errc::Shutdown, "loader shut down");
    }
    if (running_) {
        stop_workers();
        running_ = false;
    }
    const Dataset& ds = *dataset_;
    order_ = epoch_order(config_.order, config_.seed, epoch_, ds.num_samples(), page_map_, config_.batch_size);
    steps_ = config_.drop_last ? order_.size() / config_.batch_size * config_.batch_size : order_.size();
    num_batches_ = ceil_div(steps_, config_.batch_size);

    if (ds.strategy().mode == ReadMode::ProcessCache) {
        cache_ = std::make_unique<ProcessCache>(ds, std::span<const std::uint64_t>(order_).first(steps_),
                                                ds.strategy().capacity_pages,
                                                ds.strategy().prefetch_window, &tracker_,
                                                std::move(page_pool_));
        cache_->start_prefetch();
    }

    ring_.reset();
    frontier_ = 0;
    stop_ = false;
    consumed_ = 0;
    lease_ = false;
    for (std::size_t s = 0; s < slots_; ++s) {
        executor_->begin_batch(s);
    }
    stats_ = EpochStats{};
    stats_.epoch = epoch_;
    io_base_ = ds.io_stats();
    ++epoch_;
    running_ = true;

    workers_.reserve(config_.num_workers);
    for (std::uint32_t w = 0; w < config_.num_workers; ++w) {
        live_workers_.fetch_add(1);
        workers_.emplace_back([this] {
            worker_main();
            live_workers_.fetch_sub(1);
        });
    }
}

void Loader::worker_main() {
    std::uint64_t batch = 0;
    while (!stop_.load(std::memory_order_relaxed)) {
        batch = std::max(batch, frontier_.load());
        if (batch >= num_batches_) {
            return;
        }
        std::optional<std::size_t> slot;
        try {
            slot = ring_.begin_fill(batch, batch_length(batch));
        } catch (const Error&) {
            return;
        }
        std::optional<std::uint32_t> pos;
        if (slot) {
            pos = ring_.claim(*slot, batch);
        }
        if (!pos) {
            std::uint64_t expected = batch;
            frontier_.compare_exchange_strong(expected, batch + 1);
            ++batch;
            continue;
        }
        fill_position(batch, *slot, *pos);
        ring_.complete(*slot);
    }
}

void Loader::fill_position(std::uint64_t batch, std::size_t slot, std::uint32_t pos) {
    const Dataset& ds = *dataset_;
    const std::uint64_t step = batch * config_.batch_size + pos;
    const std::uint64_t sample = order_[step];
    const std::size_t meta_index = slot * config_.batch_size + pos;
    auto* labels = reinterpret_cast<std::int64_t*>(meta_.data());
    auto* indices = reinterpret_cast<std::uint64_t*>(meta_.data()) + std::size_t{slots_} * config_.batch_size;
    indices[meta_index] = sample;
    labels[meta_index] = -1;

    if (cache_ && !cache_->wait_ready(step)) {
        executor_->fail_sample(slot, pos, "shutdown");
        return;
    }
    try {
        if (label_field_) {
            labels[meta_index] = std::get<std::int64_t>(ds.cell(sample, *label_field_));
        }
        const ImageRef ref = std::get<ImageRef>(ds.cell(sample, image_field_));
        std::span<std::byte> staging = executor_->staging(slot, pos);
        std::span<const std::byte> bytes;
        if (ref.length != 0) {
            bytes = cache_ ? cache_->view(ref.offset, ref.length, staging)
                           : ds.read_blob(ref.offset, ref.length, staging);
        }
        const ConstTensorView input{ElemType::Encoded,
                                    Shape{ref.height, ref.width, ref.channels, ref.codec, ref.length},
                                    bytes};
        executor_->execute_sample(slot, pos, input, mix_keys({config_.seed, epoch_ - 1, sample}));
    } catch (const std::exception& e) {
        executor_->fail_sample(slot, pos, e.what());
    }
    if (cache_) {
        cache_->release(step);
    }
}

std::optional<BatchView> Loader::next() {
    if (shutdown_) {
        fail(Errc::Shutdown, "loader shut down");
    }
    if (!running_) {
        return std::nullopt;
    }
    if (lease_) {
        lease_ = false;
        executor_->begin_batch(lease_slot_);
        ring_.end_consume(lease_slot_);
    }
    if (consumed_ == num_batches_) {
        finish_epoch();
        return std::nullopt;
    }
    const std::size_t slot = ring_.begin_consume();
    const std::uint64_t batch = consumed_++;
    const std::uint32_t count = batch_length(batch);
    lease_ = true;
    lease_slot_ = slot;
    executor_->execute_batch_opaque(slot, count);
    ++stats_.batches;
    stats_.samples += count;

    const std::size_t base = slot * config_.batch_size;
    const auto* labels = reinterpret_cast<const std::int64_t*>(meta_.data());
    const auto* indices =
        reinterpret_cast<const std::uint64_t*>(meta_.data()) + std::size_t{slots_} * config_.batch_size;
    if (auto failure = executor_->first_failure(slot)) {
        fail(Errc::SampleFailed, "batch " + std::to_string(batch) + " position " +
                                     std::to_string(failure->position) + " (sample " +
                                     std::to_string(indices[base + failure->position]) +
                                     "): " + failure->message);
    }
    const PipelinePlan& p = executor_->plan();
    BatchView view;
    view.epoch = epoch_ - 1;
    view.index = batch;
    view.size = count;
    view.spec = p.output_spec();
    view.stride = p.stride.back();
    view.data = executor_->output_region(slot).first(view.stride * count);
    view.shapes = executor_->output_shapes(slot).first(count);
    view.labels = {labels + base, count};
    view.indices = {indices + base, count};
    return view;
}

void Loader::stop_workers() {
    stop_ = true;
    ring_.shutdown();
    if (cache_) {
        cache_->stop();
    }
    for (auto& t : workers_) {
        t.join();
    }
    workers_.clear();
    if (cache_) {
        const CacheStats cs = cache_->stats();
        stats_.page_fetches = cs.fetch_count;
        stats_.page_reloads = cs.reload_count;
        page_pool_ = cache_->take_buffers();
        cache_.reset();
    }
    lease_ = false;
}

void Loader::finish_epoch() {
    stats_ = stats();
    for (auto& t : workers_) {
        t.join();
    }
    workers_.clear();
    if (cache_) {
        page_pool_ = cache_->take_buffers();
        cache_.reset();
    }
    running_ = false;
}

EpochStats Loader::stats() const {
    EpochStats s = stats_;
    if (!running_) {
        return s;
    }
    if (cache_) {
        const CacheStats cs = cache_->stats();
        s.page_fetches = cs.fetch_count;
        s.page_reloads = cs.reload_count;
    }
    const IoStats io = dataset_->io_stats();
    s.physical_reads = io.physical_reads - io_base_.physical_reads;
    s.bytes_read = io.bytes_read - io_base_.bytes_read;
    s.latency_ns = io.latency_ns - io_base_.latency_ns;
    s.producer_blocked_ns = ring_.producer_blocked_ns();
    s.consumer_blocked_ns = ring_.consumer_blocked_ns();
    return s;
}

void Loader::shutdown() {
    if (shutdown_) {
        return;
    }
    shutdown_ = true;
    if (running_) {
        stats_ = stats();
    }
    stop_workers();
    running_ = false;
    owned_.reset();
}

EpochStats iterate_epoch(const Dataset& dataset, const LoaderConfig& config,
                         const std::function<void(const BatchView&)>& consume) {
    Loader loader(dataset, config);
    loader.start_epoch();
    while (auto batch = loader.next()) {
        consume(*batch);
    }
    return loader.stats();
}

} // namespace bbox
