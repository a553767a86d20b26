#pragma once

#include "bbox/format.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace bbox {

//------------------------------------------------------------------------------
// Field values (owned, decoded form)

struct FixedArrayValue {
    std::vector<std::byte> data; // little-endian elements
    bool operator==(const FixedArrayValue&) const = default;
};

struct BytesValue {
    std::vector<std::byte> data;
    bool operator==(const BytesValue&) const = default;
};

struct ImageValue {
    std::uint16_t height = 0;
    std::uint16_t width = 0;
    std::uint8_t channels = 0;
    std::vector<std::uint8_t> pixels; // row-major H x W x C
    bool operator==(const ImageValue&) const = default;
};

// Alternative index equals FieldKind.
using FieldValue = std::variant<std::int64_t, double, FixedArrayValue, BytesValue, ImageValue>;
using Sample = std::vector<FieldValue>;

// Throws SchemaMismatch when a value does not fit its descriptor.
void check_sample(std::span<const FieldDescriptor> schema, const Sample& sample);

//------------------------------------------------------------------------------
// Sample sources

// Indexed provider consumed by the writer. get() must be safe to call
// concurrently from several threads.
class SampleSource {
public:
    virtual ~SampleSource() = default;
    virtual const Schema& schema() const = 0;
    virtual std::uint64_t size() const = 0;
    virtual Sample get(std::uint64_t index) const = 0;
};

class InMemorySource final : public SampleSource {
public:
    InMemorySource(Schema schema, std::vector<Sample> samples);

    const Schema& schema() const override { return schema_; }
    std::uint64_t size() const override { return samples_.size(); }
    Sample get(std::uint64_t index) const override { return samples_.at(index); }

    const std::vector<Sample>& samples() const { return samples_; }

private:
    Schema schema_;
    std::vector<Sample> samples_;
};

struct SyntheticSpec {
    std::uint64_t num_samples = 0;
    std::uint16_t height = 32;
    std::uint16_t width = 32;
    std::uint8_t channels = 3;
    std::uint32_t num_classes = 10;
    std::uint64_t seed = 0;
};

// Parses "synthetic:NxHxWxC" (the prefix is optional).
SyntheticSpec parse_synthetic_spec(std::string_view text);

// Seeded blocky images with labels; schema is [label: int, image: image].
class SyntheticSource final : public SampleSource {
public:
    explicit SyntheticSource(const SyntheticSpec& spec);

    const Schema& schema() const override { return schema_; }
    std::uint64_t size() const override { return spec_.num_samples; }
    Sample get(std::uint64_t index) const override;

private:
    SyntheticSpec spec_;
    Schema schema_;
};

// Reads a `label/filename` tree of raster files. Labels are the directory
// names when they are all integers, otherwise their sorted position.
// Samples are ordered by label directory, then by file name.
class DirectorySource final : public SampleSource {
public:
    explicit DirectorySource(const std::filesystem::path& root);

    const Schema& schema() const override { return schema_; }
    std::uint64_t size() const override { return entries_.size(); }
    Sample get(std::uint64_t index) const override;

    struct Entry {
        std::filesystem::path path;
        std::int64_t label = 0;
    };
    const std::vector<Entry>& entries() const { return entries_; }

private:
    Schema schema_;
    std::vector<Entry> entries_;
};

//------------------------------------------------------------------------------
// Raster files: 12-byte header (H, W, C as little-endian u32) + raw pixels.

inline constexpr std::size_t kRasterHeaderBytes = 12;

void write_raster(const std::filesystem::path& path, const ImageValue& image);
ImageValue read_raster(const std::filesystem::path& path);
ImageValue parse_raster(std::span<const std::byte> bytes);

// Writes a source with schema [int label, image] as a directory tree. File
// names carry the source index, so DirectorySource reads it back ordered by
// (label, source index).
void export_tree(const SampleSource& source, const std::filesystem::path& root);

} // namespace bbox
