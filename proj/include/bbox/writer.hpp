#pragma once

#include "bbox/format.hpp"
#include "bbox/sample.hpp"

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace bbox {

struct WriterConfig {
    std::uint64_t page_size = kDefaultPageSize;
    unsigned num_encode_workers = 1;
    // Probability that an IMAGE value is stored with `compressed_codec`
    // rather than RAW.
    double compress_probability = 0.0;
    CodecId compressed_codec = CodecId::Rle;
    std::uint64_t seed = 0;
};

// Throws InvalidConfig.
void check_writer_config(const WriterConfig& config);

// Codec for one IMAGE value, keyed only by (seed, sample, field) so the
// choice does not depend on which worker encodes the sample.
CodecId choose_codec(const WriterConfig& config, std::uint64_t sample, std::size_t field);

// Bump allocator over fixed-size heap pages. Each worker owns a private
// current page; a blob that does not fit the residual space opens a fresh
// page. Blobs larger than a page get their own run of whole pages.
class PageAllocator {
public:
    PageAllocator(std::uint64_t heap_offset, std::uint64_t page_size, unsigned num_workers);

    // Returns the absolute file offset of a fresh region of `length` bytes.
    // Safe to call concurrently for distinct workers.
    std::uint64_t allocate(unsigned worker, std::uint64_t length);

    std::uint64_t num_pages() const noexcept { return next_page_.load(); }
    std::uint64_t heap_offset() const noexcept { return heap_offset_; }
    std::uint64_t page_size() const noexcept { return page_size_; }

    // All allocated regions, sorted by offset.
    std::vector<Region> regions() const;

private:
    struct alignas(64) WorkerState {
        bool has_page = false;
        std::uint64_t page = 0;
        std::uint64_t cursor = 0;
        std::vector<Region> regions;
    };

    std::uint64_t heap_offset_;
    std::uint64_t page_size_;
    std::atomic<std::uint64_t> next_page_{0};
    std::vector<WorkerState> workers_;
};

struct WriteReport {
    std::uint64_t num_samples = 0;
    std::uint64_t num_pages = 0;
    std::uint64_t bytes_written = 0;
    std::array<std::uint64_t, 3> codec_counts{}; // indexed by CodecId
    double waste_fraction = 0.0;
};

// Packs every sample of `source` into a container file at `path`.
WriteReport write_dataset(const SampleSource& source, const WriterConfig& config,
                          const std::filesystem::path& path);

// (heap bytes - allocated bytes) / heap bytes; 0 for an empty heap.
double report_waste(const std::filesystem::path& path);

} // namespace bbox
