#include "bbox/reader.hpp"

#include "bbox/cache.hpp"
#include "bbox/codecs.hpp"
#include "bbox/endian.hpp"
#include "bbox/error.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <thread>

namespace bbox {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t elapsed_ns(Clock::time_point since) {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - since).count());
}

// (offset, length) of the heap blob a cell refers to; length 0 if none.
std::pair<std::uint64_t, std::uint64_t> blob_of(const FieldDescriptor& f, const Cell& c) {
    switch (f.kind) {
    case FieldKind::FixedArray:
        return {std::get<ArrayRef>(c).offset, f.array().byte_length()};
    case FieldKind::VarBytes:
        return {std::get<BytesRef>(c).offset, std::get<BytesRef>(c).length};
    case FieldKind::Image:
        return {std::get<ImageRef>(c).offset, std::get<ImageRef>(c).length};
    default:
        return {0, 0};
    }
}

} // namespace

Dataset::Dataset(const std::filesystem::path& path, ReadStrategy strategy)
    : path_(path), strategy_(strategy), file_(path, File::Mode::Read) {
    if (strategy_.mode == ReadMode::ProcessCache && strategy_.capacity_pages == 0) {
        fail(Errc::CapacityTooSmall, "process cache needs capacity of at least one page");
    }
    if (strategy_.prefetch_window == 0) {
        fail(Errc::InvalidConfig, "prefetch window must be at least one page");
    }

    MappedFile map(file_);
    const auto report = validate_bytes(map.bytes());
    if (!report.ok()) {
        const auto& v = report.violations.front();
        fail(Errc::InvalidFile, v.kind + ": " + v.detail);
    }
    header_ = decode_header(map.bytes());
    layout_ = RowLayout(header_.fields);
    const auto table = map.bytes().subspan(header_.data_table_offset,
                                           header_.num_samples * layout_.width());
    rows_.assign(table.begin(), table.end());
    regions_ = decode_alloc_table(map.bytes().subspan(header_.alloc_table_offset));
    sample_page_begin_.reserve(header_.num_samples + 1);
    sample_page_begin_.push_back(0);
    for (std::uint64_t i = 0; i < header_.num_samples; ++i) {
        const std::size_t begin = sample_pages_.size();
        for (std::size_t f = 0; f < header_.fields.size(); ++f) {
            const auto [offset, length] = blob_of(header_.fields[f], cell(i, f));
            if (length == 0) {
                continue;
            }
            for (std::uint64_t p = page_of(offset); p <= page_of(offset + length - 1); ++p) {
                sample_pages_.push_back(p);
            }
        }
        std::sort(sample_pages_.begin() + static_cast<std::ptrdiff_t>(begin), sample_pages_.end());
        sample_pages_.erase(std::unique(sample_pages_.begin() + static_cast<std::ptrdiff_t>(begin), sample_pages_.end()),
                            sample_pages_.end());
        sample_page_begin_.push_back(sample_pages_.size());
    }
    if (strategy_.mode == ReadMode::OsCache) {
        map_ = std::move(map);
    }
}

Dataset::~Dataset() = default;

std::optional<std::size_t> Dataset::field_index(std::string_view name) const {
    for (std::size_t f = 0; f < header_.fields.size(); ++f) {
        if (header_.fields[f].name == name) {
            return f;
        }
    }
    return std::nullopt;
}

std::span<const std::byte> Dataset::row_bytes(std::uint64_t i) const {
    if (i >= header_.num_samples) {
        fail(Errc::IndexOutOfRange, "sample " + std::to_string(i) + " out of range (" +
                                        std::to_string(header_.num_samples) + " samples)");
    }
    return std::span<const std::byte>(rows_).subspan(i * layout_.width(), layout_.width());
}

Cell Dataset::cell(std::uint64_t i, std::size_t field) const {
    const auto& f = header_.fields.at(field);
    return decode_cell(f, row_bytes(i).subspan(layout_.offset(field), f.row_cell_width()));
}

std::vector<Cell> Dataset::row(std::uint64_t i) const { return decode_row(header_.fields, row_bytes(i)); }

void Dataset::pages_of_sample(std::uint64_t i, std::vector<std::uint64_t>& out) const {
    const auto pages = sample_pages(i);
    out.insert(out.end(), pages.begin(), pages.end());
}

std::span<const std::uint64_t> Dataset::sample_pages(std::uint64_t i) const {
    if (i >= header_.num_samples) {
        fail(Errc::IndexOutOfRange, "sample " + std::to_string(i) + " out of range (" +
                                        std::to_string(header_.num_samples) + " samples)");
    }
    return std::span<const std::uint64_t>(sample_pages_)
        .subspan(sample_page_begin_[i], sample_page_begin_[i + 1] - sample_page_begin_[i]);
}

std::vector<std::uint64_t> Dataset::traversal_page_map() const {
    std::vector<std::uint64_t> map(header_.num_samples, kNoPage);
    for (std::uint64_t i = 0; i < header_.num_samples; ++i) {
        for (std::size_t f = 0; f < header_.fields.size(); ++f) {
            const auto [offset, length] = blob_of(header_.fields[f], cell(i, f));
            if (length > 0) {
                map[i] = page_of(offset);
                break;
            }
        }
        if (map[i] == kNoPage) {
            map[i] = num_pages() + i * layout_.width() / header_.page_size;
        }
    }
    return map;
}

void Dataset::physical_read(std::uint64_t offset, std::span<std::byte> out) const {
    const auto start = Clock::now();
    if (strategy_.read_latency.count() > 0) {
        latency_ns_.fetch_add(static_cast<std::uint64_t>(inject_latency(strategy_.read_latency).count()));
    }
    file_.read_at(offset, out);
    read_ns_.fetch_add(elapsed_ns(start));
    reads_.fetch_add(1);
    bytes_read_.fetch_add(out.size());
}

void Dataset::read_page(std::uint64_t page, std::span<std::byte> out) const {
    if (page >= num_pages() || out.size() < header_.page_size) {
        fail(Errc::IndexOutOfRange, "page " + std::to_string(page) + " out of range");
    }
    physical_read(header_.heap_offset + page * header_.page_size, out.first(header_.page_size));
}

std::span<const std::byte> Dataset::read_blob(std::uint64_t offset, std::uint64_t length,
                                              std::span<std::byte> scratch) const {
    if (offset < header_.heap_offset || offset + length > header_.alloc_table_offset) {
        fail(Errc::IndexOutOfRange, "heap range out of bounds");
    }
    switch (strategy_.mode) {
    case ReadMode::OsCache:
        return map_.bytes().subspan(offset, length);
    case ReadMode::Direct:
        if (scratch.size() < length) {
            fail(Errc::InvalidConfig, "scratch buffer too small for direct read");
        }
        physical_read(offset, scratch.first(length));
        return scratch.first(length);
    case ReadMode::ProcessCache:
        if (!active_cache_) {
            fail(Errc::PageNotResident, "no process cache is active");
        }
        return active_cache_->view(offset, length, scratch);
    }
    fail(Errc::InvalidConfig, "unknown read mode");
}

void Dataset::decode_field(std::uint64_t i, std::size_t f, FieldValue& out,
                           std::vector<std::byte>& scratch, const ProcessCache* cache) const {
    const auto& field = header_.fields[f];
    const Cell c = cell(i, f);
    const auto [offset, length] = blob_of(field, c);
    std::span<const std::byte> bytes;
    if (length > 0) {
        scratch.resize(length);
        bytes = cache != nullptr ? cache->view(offset, length, scratch)
                                 : read_blob(offset, length, scratch);
    }
    switch (field.kind) {
    case FieldKind::IntScalar:
        out = std::get<std::int64_t>(c);
        break;
    case FieldKind::FloatScalar:
        out = std::get<double>(c);
        break;
    case FieldKind::FixedArray: {
        if (!std::holds_alternative<FixedArrayValue>(out)) {
            out = FixedArrayValue{};
        }
        std::get<FixedArrayValue>(out).data.assign(bytes.begin(), bytes.end());
        break;
    }
    case FieldKind::VarBytes: {
        if (!std::holds_alternative<BytesValue>(out)) {
            out = BytesValue{};
        }
        std::get<BytesValue>(out).data.assign(bytes.begin(), bytes.end());
        break;
    }
    case FieldKind::Image: {
        const auto& ref = std::get<ImageRef>(c);
        if (!std::holds_alternative<ImageValue>(out)) {
            out = ImageValue{};
        }
        auto& img = std::get<ImageValue>(out);
        img.height = ref.height;
        img.width = ref.width;
        img.channels = ref.channels;
        img.pixels.resize(std::size_t{ref.height} * ref.width * ref.channels);
        decode_image({ref.height, ref.width, ref.channels, ref.codec, bytes}, img.pixels);
        break;
    }
    }
}

void Dataset::get_sample(std::uint64_t i, Sample& out) const {
    row_bytes(i); // range check
    out.resize(header_.fields.size());
    std::vector<std::byte> scratch;
    for (std::size_t f = 0; f < header_.fields.size(); ++f) {
        decode_field(i, f, out[f], scratch, nullptr);
    }
}

Sample Dataset::get_sample(std::uint64_t i) const {
    Sample s;
    get_sample(i, s);
    return s;
}

std::vector<std::uint64_t> Dataset::filter(std::string_view field,
                                           const std::function<bool(const Cell&)>& pred) const {
    const auto f = field_index(field);
    if (!f) {
        fail(Errc::SchemaMismatch, "no field named '" + std::string(field) + "'");
    }
    std::vector<std::uint64_t> hits;
    for (std::uint64_t i = 0; i < header_.num_samples; ++i) {
        if (pred(cell(i, *f))) {
            hits.push_back(i);
        }
    }
    return hits;
}

ProcessCache& Dataset::begin_epoch(std::span<const std::uint64_t> order, MemoryTracker* tracker) {
    if (strategy_.mode != ReadMode::ProcessCache) {
        fail(Errc::InvalidConfig, "begin_epoch requires the process cache strategy");
    }
    active_cache_.reset();
    active_cache_ = std::make_unique<ProcessCache>(*this, order, strategy_.capacity_pages,
                                                   strategy_.prefetch_window, tracker);
    return *active_cache_;
}

IoStats Dataset::io_stats() const {
    return {reads_.load(), bytes_read_.load(), read_ns_.load(), latency_ns_.load()};
}

void Dataset::reset_io_stats() {
    reads_ = 0;
    bytes_read_ = 0;
    read_ns_ = 0;
    latency_ns_ = 0;
}

} // namespace bbox
