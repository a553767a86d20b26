#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace bbox {

//------------------------------------------------------------------------------
// Constants

inline constexpr std::array<char, 8> kMagic = {'F', 'A', 'S', 'T', 'D', 'S', '0', '1'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint64_t kDefaultPageSize = 8ULL << 20;
inline constexpr std::uint64_t kMinPageSize = 1ULL << 16;
inline constexpr std::size_t kHeaderPrefixBytes = 56;
inline constexpr std::size_t kDescriptorBytes = 124;
inline constexpr std::size_t kMaxFieldNameBytes = 63;
inline constexpr std::size_t kMaxArrayDims = 4;

//------------------------------------------------------------------------------
// Schema

enum class FieldKind : std::uint8_t {
    IntScalar = 0,
    FloatScalar = 1,
    FixedArray = 2,
    VarBytes = 3,
    Image = 4,
};

enum class Dtype : std::uint8_t { U8 = 0, I64 = 1, F32 = 2, F64 = 3 };

enum class CodecId : std::uint8_t { Raw = 0, Rle = 1, Subsample2 = 2 };

std::size_t dtype_size(Dtype dtype);
std::string_view codec_name(CodecId codec);
std::string_view kind_name(FieldKind kind);

struct ArrayParams {
    Dtype dtype = Dtype::U8;
    std::uint8_t ndims = 1;
    std::array<std::uint32_t, kMaxArrayDims> dims{};

    std::uint64_t element_count() const;
    std::uint64_t byte_length() const;
    bool operator==(const ArrayParams&) const = default;
};

struct ImageParams {
    std::uint16_t max_height = 0;
    std::uint16_t max_width = 0;
    std::uint8_t channels = 0;
    bool operator==(const ImageParams&) const = default;
};

struct FieldDescriptor {
    std::string name;
    FieldKind kind = FieldKind::IntScalar;
    std::variant<std::monostate, ArrayParams, ImageParams> params;

    static FieldDescriptor int_scalar(std::string name);
    static FieldDescriptor float_scalar(std::string name);
    static FieldDescriptor fixed_array(std::string name, Dtype dtype,
                                       std::initializer_list<std::uint32_t> dims);
    static FieldDescriptor var_bytes(std::string name);
    static FieldDescriptor image(std::string name, std::uint16_t max_height,
                                 std::uint16_t max_width, std::uint8_t channels);

    const ArrayParams& array() const { return std::get<ArrayParams>(params); }
    const ImageParams& image() const { return std::get<ImageParams>(params); }
    std::uint32_t row_cell_width() const;

    bool operator==(const FieldDescriptor&) const = default;
};

using Schema = std::vector<FieldDescriptor>;

std::uint32_t cell_width(FieldKind kind);

//------------------------------------------------------------------------------
// Header

struct DatasetHeader {
    std::uint32_t format_version = kFormatVersion;
    std::uint64_t num_samples = 0;
    std::uint64_t page_size = kDefaultPageSize;
    std::uint64_t data_table_offset = 0;
    std::uint64_t heap_offset = 0;
    std::uint64_t alloc_table_offset = 0;
    Schema fields;

    bool operator==(const DatasetHeader&) const = default;
};

std::size_t header_byte_length(std::size_t num_fields);

// Throws Error(InvalidHeader) describing the first broken invariant.
void check_header(const DatasetHeader& header);

std::vector<std::byte> encode_header(const DatasetHeader& header);
DatasetHeader decode_header(std::span<const std::byte> bytes);

//------------------------------------------------------------------------------
// Data Table rows

struct ArrayRef {
    std::uint64_t offset = 0;
    bool operator==(const ArrayRef&) const = default;
};

struct BytesRef {
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    bool operator==(const BytesRef&) const = default;
};

struct ImageRef {
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    std::uint16_t height = 0;
    std::uint16_t width = 0;
    std::uint8_t channels = 0;
    CodecId codec = CodecId::Raw;
    bool operator==(const ImageRef&) const = default;
};

// Alternative index equals FieldKind.
using Cell = std::variant<std::int64_t, double, ArrayRef, BytesRef, ImageRef>;

// Byte offsets of each cell within a row.
class RowLayout {
public:
    RowLayout() = default;
    explicit RowLayout(std::span<const FieldDescriptor> schema);

    std::uint32_t width() const noexcept { return width_; }
    std::uint32_t offset(std::size_t field) const { return offsets_[field]; }
    std::size_t size() const noexcept { return offsets_.size(); }

private:
    std::vector<std::uint32_t> offsets_;
    std::uint32_t width_ = 0;
};

std::uint64_t row_width(std::span<const FieldDescriptor> schema);

void encode_row_into(std::span<const FieldDescriptor> schema, std::span<const Cell> cells,
                     std::span<std::byte> out);
std::vector<std::byte> encode_row(std::span<const FieldDescriptor> schema,
                                  std::span<const Cell> cells);
Cell decode_cell(const FieldDescriptor& field, std::span<const std::byte> cell_bytes);
std::vector<Cell> decode_row(std::span<const FieldDescriptor> schema,
                             std::span<const std::byte> row);

//------------------------------------------------------------------------------
// Allocation Table

struct Region {
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    auto operator<=>(const Region&) const = default;
};

std::vector<std::byte> encode_alloc_table(std::span<const Region> regions);
// `bytes` starts at alloc_table_offset and runs to the end of the file.
std::vector<Region> decode_alloc_table(std::span<const std::byte> bytes);

//------------------------------------------------------------------------------
// Validation

struct Violation {
    std::string kind;
    std::string detail;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const noexcept { return violations.empty(); }
    std::size_t count(std::string_view kind) const;
};

// Checks every section invariant of an in-memory file image.
ValidationReport validate_bytes(std::span<const std::byte> file);
ValidationReport validate_file(const std::filesystem::path& path);

} // namespace bbox
