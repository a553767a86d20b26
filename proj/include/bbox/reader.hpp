#pragma once

#include "bbox/format.hpp"
#include "bbox/io.hpp"
#include "bbox/sample.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace bbox {

class ProcessCache;
class MemoryTracker;

enum class ReadMode { OsCache, ProcessCache, Direct };

struct ReadStrategy {
    ReadMode mode = ReadMode::OsCache;
    std::uint64_t capacity_pages = 0;  // ProcessCache only
    std::uint64_t prefetch_window = 8; // ProcessCache only, in pages
    // Added to every physical read; emulates a slow network filesystem.
    std::chrono::microseconds read_latency{0};

    static ReadStrategy os_cache() { return {}; }
    static ReadStrategy direct() { return {ReadMode::Direct, 0, 8, {}}; }
    static ReadStrategy process_cache(std::uint64_t capacity_pages, std::uint64_t window = 8) {
        return {ReadMode::ProcessCache, capacity_pages, window, {}};
    }
};

struct IoStats {
    std::uint64_t physical_reads = 0;
    std::uint64_t bytes_read = 0;
    std::uint64_t read_ns = 0;    // wall time inside physical reads, latency included
    std::uint64_t latency_ns = 0; // wall time inside the latency injector alone
};

inline constexpr std::uint64_t kNoPage = ~std::uint64_t{0};

// An open container file. Metadata (header, Data Table, Allocation Table)
// is loaded at open; heap bytes are served per the read strategy. All const
// members are safe to call concurrently.
class Dataset {
public:
    // Throws Io, InvalidFile (with the first violation), CapacityTooSmall.
    Dataset(const std::filesystem::path& path, ReadStrategy strategy = ReadStrategy::os_cache());
    ~Dataset();

    Dataset(const Dataset&) = delete;
    Dataset& operator=(const Dataset&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    const ReadStrategy& strategy() const noexcept { return strategy_; }
    const DatasetHeader& header() const noexcept { return header_; }
    const Schema& schema() const noexcept { return header_.fields; }
    const RowLayout& layout() const noexcept { return layout_; }
    const std::vector<Region>& regions() const noexcept { return regions_; }
    std::uint64_t num_samples() const noexcept { return header_.num_samples; }
    std::uint64_t page_size() const noexcept { return header_.page_size; }
    std::uint64_t heap_offset() const noexcept { return header_.heap_offset; }
    std::uint64_t num_pages() const noexcept {
        return (header_.alloc_table_offset - header_.heap_offset) / header_.page_size;
    }

    std::optional<std::size_t> field_index(std::string_view name) const;

    // O(1) row addressing. Throw IndexOutOfRange.
    std::span<const std::byte> row_bytes(std::uint64_t i) const;
    Cell cell(std::uint64_t i, std::size_t field) const;
    std::vector<Cell> row(std::uint64_t i) const;

    std::uint64_t page_of(std::uint64_t offset) const noexcept {
        return (offset - header_.heap_offset) / header_.page_size;
    }
    // Sorted distinct heap pages touched by sample i (appended to `out`).
    void pages_of_sample(std::uint64_t i, std::vector<std::uint64_t>& out) const;
    // Sorted distinct heap pages holding sample i's blobs.
    std::span<const std::uint64_t> sample_pages(std::uint64_t i) const;
    // Page used to group sample i for quasi-random traversal: the page of its
    // first heap blob, or a virtual id past num_pages() for samples without
    // heap data.
    std::vector<std::uint64_t> traversal_page_map() const;

    // Heap bytes [offset, offset + length). OS_CACHE returns a view of the
    // mapping; DIRECT reads into `scratch`; PROCESS_CACHE serves resident
    // pages of the active cache (PageNotResident otherwise).
    std::span<const std::byte> read_blob(std::uint64_t offset, std::uint64_t length,
                                         std::span<std::byte> scratch) const;

    // One physical read of a whole heap page (latency injected, counted).
    void read_page(std::uint64_t page, std::span<std::byte> out) const;

    // Decodes every field of sample i into `out`, reusing its storage.
    void get_sample(std::uint64_t i, Sample& out) const;
    Sample get_sample(std::uint64_t i) const;

    // Row scan: indices whose cell in `field` satisfies `pred`.
    std::vector<std::uint64_t> filter(std::string_view field,
                                      const std::function<bool(const Cell&)>& pred) const;

    // PROCESS_CACHE: installs a cache planned for `order` that get_sample
    // and read_blob consult. Replaces any previous one.
    ProcessCache& begin_epoch(std::span<const std::uint64_t> order,
                              MemoryTracker* tracker = nullptr);
    ProcessCache* active_cache() const noexcept { return active_cache_.get(); }

    IoStats io_stats() const;
    void reset_io_stats();

private:
    friend class ProcessCache;
    void physical_read(std::uint64_t offset, std::span<std::byte> out) const;
    void decode_field(std::uint64_t i, std::size_t field, FieldValue& out,
                      std::vector<std::byte>& scratch, const ProcessCache* cache) const;

    std::filesystem::path path_;
    ReadStrategy strategy_;
    File file_;
    MappedFile map_;
    DatasetHeader header_;
    RowLayout layout_;
    std::vector<std::byte> rows_;
    std::vector<Region> regions_;
    std::vector<std::uint64_t> sample_page_begin_; // CSR index into sample_pages_
    std::vector<std::uint64_t> sample_pages_;
    std::unique_ptr<ProcessCache> active_cache_;

    mutable std::atomic<std::uint64_t> reads_{0};
    mutable std::atomic<std::uint64_t> bytes_read_{0};
    mutable std::atomic<std::uint64_t> read_ns_{0};
    mutable std::atomic<std::uint64_t> latency_ns_{0};
};

} // namespace bbox
