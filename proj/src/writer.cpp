#include "bbox/writer.hpp"

#include "bbox/codecs.hpp"
#include "bbox/endian.hpp"
#include "bbox/error.hpp"
#include "bbox/io.hpp"
#include "bbox/random.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

namespace bbox {

void check_writer_config(const WriterConfig& config) {
    if (!is_power_of_two(config.page_size) || config.page_size < kMinPageSize) {
        fail(Errc::InvalidConfig, "page size must be a power of two >= 65536");
    }
    if (config.num_encode_workers < 1) {
        fail(Errc::InvalidConfig, "need at least one encode worker");
    }
    if (!(config.compress_probability >= 0.0 && config.compress_probability <= 1.0)) {
        fail(Errc::InvalidConfig, "compress probability must lie in [0, 1]");
    }
    if (static_cast<unsigned>(config.compressed_codec) > 2) {
        fail(Errc::InvalidConfig, "unknown codec");
    }
}

CodecId choose_codec(const WriterConfig& config, std::uint64_t sample, std::size_t field) {
    const double u = unit_from(mix_keys({config.seed, sample, field, 0x636f646563ULL}));
    return u < config.compress_probability ? config.compressed_codec : CodecId::Raw;
}

//------------------------------------------------------------------------------
// PageAllocator

PageAllocator::PageAllocator(std::uint64_t heap_offset, std::uint64_t page_size,
                             unsigned num_workers)
    : heap_offset_(heap_offset), page_size_(page_size), workers_(std::max(1u, num_workers)) {}

std::uint64_t PageAllocator::allocate(unsigned worker, std::uint64_t length) {
    if (length == 0) {
        fail(Errc::InvalidConfig, "cannot allocate an empty region");
    }
    auto& w = workers_.at(worker);
    std::uint64_t offset;
    if (length > page_size_) {
        const std::uint64_t pages = ceil_div(length, page_size_);
        const std::uint64_t first = next_page_.fetch_add(pages);
        offset = heap_offset_ + first * page_size_;
    } else {
        if (!w.has_page || w.cursor + length > page_size_) {
            w.page = next_page_.fetch_add(1);
            w.cursor = 0;
            w.has_page = true;
        }
        offset = heap_offset_ + w.page * page_size_ + w.cursor;
        w.cursor += length;
    }
    w.regions.push_back({offset, length});
    return offset;
}

std::vector<Region> PageAllocator::regions() const {
    std::vector<Region> all;
    for (const auto& w : workers_) {
        all.insert(all.end(), w.regions.begin(), w.regions.end());
    }
    std::sort(all.begin(), all.end());
    return all;
}

//------------------------------------------------------------------------------
// write_dataset

namespace {

class DatasetWriter {
public:
    DatasetWriter(const SampleSource& source, const WriterConfig& config,
                  const std::filesystem::path& path)
        : source_(source),
          config_(config),
          schema_(source.schema()),
          layout_(schema_),
          file_(path, File::Mode::Write) {
        header_.num_samples = source.size();
        header_.page_size = config.page_size;
        header_.fields = schema_;
        header_.data_table_offset = header_byte_length(schema_.size());
        const std::uint64_t rows_end = header_.data_table_offset + header_.num_samples * layout_.width();
        header_.heap_offset = align_up(rows_end, config.page_size);
        if (header_.heap_offset == header_.data_table_offset) {
            header_.heap_offset += config.page_size;
        }
        rows_.resize(header_.num_samples * layout_.width());
        allocator_.emplace(header_.heap_offset, config.page_size, config.num_encode_workers);
    }

    WriteReport run() {
        std::vector<std::thread> threads;
        for (unsigned w = 1; w < config_.num_encode_workers; ++w) {
            threads.emplace_back([this, w] { work(w); });
        }
        work(0);
        for (auto& t : threads) {
            t.join();
        }
        if (error_) {
            std::rethrow_exception(error_);
        }
        return finish();
    }

private:
    void work(unsigned worker) {
        try {
            std::vector<Cell> cells(schema_.size());
            while (!abort_.load(std::memory_order_relaxed)) {
                const std::uint64_t i = next_.fetch_add(1);
                if (i >= header_.num_samples) {
                    break;
                }
                Sample sample;
                try {
                    sample = source_.get(i);
                } catch (const std::exception& e) {
                    fail(Errc::SourceError, "sample " + std::to_string(i) + ": " + e.what());
                }
                check_sample(schema_, sample);
                encode_sample(worker, i, sample, cells);
                encode_row_into(schema_, cells,
                                std::span(rows_).subspan(i * layout_.width(), layout_.width()));
            }
        } catch (...) {
            std::lock_guard lock(error_mutex_);
            if (!error_) {
                error_ = std::current_exception();
            }
            abort_.store(true);
        }
    }

    std::uint64_t store_blob(unsigned worker, std::span<const std::byte> payload) {
        const std::uint64_t offset = allocator_->allocate(worker, payload.size());
        file_.write_at(offset, payload);
        return offset;
    }

    void encode_sample(unsigned worker, std::uint64_t index, const Sample& sample,
                       std::vector<Cell>& cells) {
        for (std::size_t f = 0; f < schema_.size(); ++f) {
            const auto& field = schema_[f];
            switch (field.kind) {
            case FieldKind::IntScalar:
                cells[f] = std::get<std::int64_t>(sample[f]);
                break;
            case FieldKind::FloatScalar:
                cells[f] = std::get<double>(sample[f]);
                break;
            case FieldKind::FixedArray:
                cells[f] = ArrayRef{store_blob(worker, std::get<FixedArrayValue>(sample[f]).data)};
                break;
            case FieldKind::VarBytes: {
                const auto& data = std::get<BytesValue>(sample[f]).data;
                cells[f] = data.empty() ? BytesRef{0, 0}
                                        : BytesRef{store_blob(worker, data), data.size()};
                break;
            }
            case FieldKind::Image: {
                const auto& img = std::get<ImageValue>(sample[f]);
                const CodecId codec = choose_codec(config_, index, f);
                const ImageBlob blob = encode_image(img.pixels, img.height, img.width,
                                                    img.channels, codec, &field.image());
                cells[f] = ImageRef{store_blob(worker, blob.payload), blob.payload.size(),
                                    blob.height, blob.width, blob.channels, codec};
                codec_counts_[static_cast<std::size_t>(codec)].fetch_add(1);
                break;
            }
            }
        }
    }

    WriteReport finish() {
        const std::uint64_t num_pages = allocator_->num_pages();
        header_.alloc_table_offset = header_.heap_offset + num_pages * config_.page_size;
        const auto regions = allocator_->regions();
        const auto table = encode_alloc_table(regions);
        file_.truncate(header_.alloc_table_offset);
        file_.write_at(header_.alloc_table_offset, table);
        file_.write_at(header_.data_table_offset, rows_);
        file_.write_at(0, encode_header(header_));
        const std::uint64_t length = header_.alloc_table_offset + table.size();
        file_.truncate(length);
        file_.close();

        WriteReport report;
        report.num_samples = header_.num_samples;
        report.num_pages = num_pages;
        report.bytes_written = length;
        for (std::size_t c = 0; c < report.codec_counts.size(); ++c) {
            report.codec_counts[c] = codec_counts_[c].load();
        }
        std::uint64_t used = 0;
        for (const auto& r : regions) {
            used += r.length;
        }
        const std::uint64_t heap = num_pages * config_.page_size;
        report.waste_fraction =
            heap == 0 ? 0.0 : static_cast<double>(heap - used) / static_cast<double>(heap);
        return report;
    }

    const SampleSource& source_;
    const WriterConfig& config_;
    Schema schema_;
    RowLayout layout_;
    File file_;
    DatasetHeader header_;
    std::vector<std::byte> rows_;
    std::optional<PageAllocator> allocator_;

    std::atomic<std::uint64_t> next_{0};
    std::atomic<bool> abort_{false};
    std::array<std::atomic<std::uint64_t>, 3> codec_counts_{};
    std::mutex error_mutex_;
    std::exception_ptr error_;
};

} // namespace

WriteReport write_dataset(const SampleSource& source, const WriterConfig& config,
                          const std::filesystem::path& path) {
    check_writer_config(config);
    DatasetHeader probe;
    probe.fields = source.schema();
    probe.page_size = config.page_size;
    probe.data_table_offset = header_byte_length(probe.fields.size());
    probe.heap_offset = align_up(probe.data_table_offset + 1, config.page_size);
    probe.alloc_table_offset = probe.heap_offset;
    check_header(probe);

    try {
        DatasetWriter writer(source, config, path);
        return writer.run();
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove(path, ec);
        throw;
    }
}

double report_waste(const std::filesystem::path& path) {
    File f(path, File::Mode::Read);
    MappedFile map(f);
    const auto report = validate_bytes(map.bytes());
    if (!report.ok()) {
        fail(Errc::InvalidFile, "invalid file: " + report.violations.front().kind);
    }
    const DatasetHeader h = decode_header(map.bytes());
    const auto regions = decode_alloc_table(map.bytes().subspan(h.alloc_table_offset));
    const std::uint64_t heap = h.alloc_table_offset - h.heap_offset;
    if (heap == 0) {
        return 0.0;
    }
    std::uint64_t used = 0;
    for (const auto& r : regions) {
        used += r.length;
    }
    return static_cast<double>(heap - used) / static_cast<double>(heap);
}

} // namespace bbox
