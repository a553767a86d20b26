#include "bbox/format.hpp"

#include "bbox/codecs.hpp"
#include "bbox/endian.hpp"
#include "bbox/error.hpp"
#include "bbox/io.hpp"

#include <algorithm>
#include <cstring>
#include <set>

namespace bbox {

std::string_view errc_name(Errc code) {
    switch (code) {
    case Errc::InvalidHeader: return "InvalidHeader";
    case Errc::BadMagic: return "BadMagic";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::DimsExceedMax: return "DimsExceedMax";
    case Errc::CorruptPayload: return "CorruptPayload";
    case Errc::InvalidFile: return "InvalidFile";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::CapacityTooSmall: return "CapacityTooSmall";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::PageNotResident: return "PageNotResident";
    case Errc::SpecMismatch: return "SpecMismatch";
    case Errc::SourceError: return "SourceError";
    case Errc::SampleFailed: return "SampleFailed";
    case Errc::Shutdown: return "Shutdown";
    case Errc::Io: return "Io";
    }
    return "Unknown";
}

std::size_t dtype_size(Dtype dtype) {
    switch (dtype) {
    case Dtype::U8: return 1;
    case Dtype::I64: return 8;
    case Dtype::F32: return 4;
    case Dtype::F64: return 8;
    }
    fail(Errc::InvalidHeader, "unknown dtype code");
}

std::string_view codec_name(CodecId codec) {
    switch (codec) {
    case CodecId::Raw: return "raw";
    case CodecId::Rle: return "rle";
    case CodecId::Subsample2: return "subsample2";
    }
    return "unknown";
}

std::string_view kind_name(FieldKind kind) {
    switch (kind) {
    case FieldKind::IntScalar: return "int";
    case FieldKind::FloatScalar: return "float";
    case FieldKind::FixedArray: return "array";
    case FieldKind::VarBytes: return "bytes";
    case FieldKind::Image: return "image";
    }
    return "unknown";
}

std::uint64_t ArrayParams::element_count() const {
    std::uint64_t n = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
        n *= dims[d];
    }
    return n;
}

std::uint64_t ArrayParams::byte_length() const { return element_count() * dtype_size(dtype); }

FieldDescriptor FieldDescriptor::int_scalar(std::string name) {
    return {std::move(name), FieldKind::IntScalar, std::monostate{}};
}

FieldDescriptor FieldDescriptor::float_scalar(std::string name) {
    return {std::move(name), FieldKind::FloatScalar, std::monostate{}};
}

FieldDescriptor FieldDescriptor::fixed_array(std::string name, Dtype dtype,
                                             std::initializer_list<std::uint32_t> dims) {
    if (dims.size() == 0 || dims.size() > kMaxArrayDims) {
        fail(Errc::InvalidHeader, "fixed array needs 1 to 4 dims");
    }
    ArrayParams p;
    p.dtype = dtype;
    p.ndims = static_cast<std::uint8_t>(dims.size());
    std::copy(dims.begin(), dims.end(), p.dims.begin());
    return {std::move(name), FieldKind::FixedArray, p};
}

FieldDescriptor FieldDescriptor::var_bytes(std::string name) {
    return {std::move(name), FieldKind::VarBytes, std::monostate{}};
}

FieldDescriptor FieldDescriptor::image(std::string name, std::uint16_t max_height,
                                       std::uint16_t max_width, std::uint8_t channels) {
    return {std::move(name), FieldKind::Image, ImageParams{max_height, max_width, channels}};
}

std::uint32_t cell_width(FieldKind kind) {
    switch (kind) {
    case FieldKind::IntScalar:
    case FieldKind::FloatScalar:
    case FieldKind::FixedArray:
        return 8;
    case FieldKind::VarBytes:
        return 16;
    case FieldKind::Image:
        return 24;
    }
    fail(Errc::InvalidHeader, "unknown field kind");
}

std::uint32_t FieldDescriptor::row_cell_width() const { return cell_width(kind); }

std::size_t header_byte_length(std::size_t num_fields) {
    return kHeaderPrefixBytes + kDescriptorBytes * num_fields;
}

std::uint64_t row_width(std::span<const FieldDescriptor> schema) {
    std::uint64_t w = 0;
    for (const auto& f : schema) {
        w += f.row_cell_width();
    }
    return w;
}

//------------------------------------------------------------------------------
// Header

namespace {

void check_field(const FieldDescriptor& f) {
    if (f.name.empty() || f.name.size() > kMaxFieldNameBytes) {
        fail(Errc::InvalidHeader, "field name must be 1..63 bytes");
    }
    if (f.name.find('\0') != std::string::npos) {
        fail(Errc::InvalidHeader, "field name contains NUL");
    }
    switch (f.kind) {
    case FieldKind::IntScalar:
    case FieldKind::FloatScalar:
    case FieldKind::VarBytes:
        if (!std::holds_alternative<std::monostate>(f.params)) {
            fail(Errc::InvalidHeader, "field '" + f.name + "' carries unexpected parameters");
        }
        break;
    case FieldKind::FixedArray: {
        if (!std::holds_alternative<ArrayParams>(f.params)) {
            fail(Errc::InvalidHeader, "array field '" + f.name + "' lacks parameters");
        }
        const auto& p = f.array();
        if (static_cast<unsigned>(p.dtype) > 3) {
            fail(Errc::InvalidHeader, "bad dtype code");
        }
        if (p.ndims < 1 || p.ndims > kMaxArrayDims) {
            fail(Errc::InvalidHeader, "array ndims must be 1..4");
        }
        for (std::size_t d = 0; d < kMaxArrayDims; ++d) {
            if (d < p.ndims ? p.dims[d] == 0 : p.dims[d] != 0) {
                fail(Errc::InvalidHeader, "bad array dims for '" + f.name + "'");
            }
        }
        break;
    }
    case FieldKind::Image: {
        if (!std::holds_alternative<ImageParams>(f.params)) {
            fail(Errc::InvalidHeader, "image field '" + f.name + "' lacks parameters");
        }
        const auto& p = f.image();
        if (p.max_height == 0 || p.max_width == 0 || p.channels == 0) {
            fail(Errc::InvalidHeader, "image dims must be nonzero");
        }
        break;
    }
    default:
        fail(Errc::InvalidHeader, "unknown field kind");
    }
}

} // namespace

void check_header(const DatasetHeader& h) {
    if (h.format_version != kFormatVersion) {
        fail(Errc::InvalidHeader, "format_version must be 1");
    }
    if (h.fields.empty()) {
        fail(Errc::InvalidHeader, "num_fields must be >= 1");
    }
    if (h.fields.size() > 0xffff) {
        fail(Errc::InvalidHeader, "too many fields");
    }
    std::set<std::string_view> names;
    for (const auto& f : h.fields) {
        check_field(f);
        if (!names.insert(f.name).second) {
            fail(Errc::InvalidHeader, "duplicate field name '" + f.name + "'");
        }
    }
    if (!is_power_of_two(h.page_size) || h.page_size < kMinPageSize) {
        fail(Errc::InvalidHeader, "page_size must be a power of two >= 65536");
    }
    if (h.data_table_offset != header_byte_length(h.fields.size())) {
        fail(Errc::InvalidHeader, "data_table_offset must equal the header length");
    }
    if (h.heap_offset % h.page_size != 0) {
        fail(Errc::InvalidHeader, "heap_offset must be page aligned");
    }
    if (!(h.data_table_offset < h.heap_offset && h.heap_offset <= h.alloc_table_offset)) {
        fail(Errc::InvalidHeader, "section offsets out of order");
    }
    const std::uint64_t rows_end = h.data_table_offset + h.num_samples * row_width(h.fields);
    if (rows_end > h.heap_offset) {
        fail(Errc::InvalidHeader, "data table overlaps heap");
    }
    if ((h.alloc_table_offset - h.heap_offset) % h.page_size != 0) {
        fail(Errc::InvalidHeader, "heap is not a whole number of pages");
    }
}

std::vector<std::byte> encode_header(const DatasetHeader& h) {
    check_header(h);
    std::vector<std::byte> out(header_byte_length(h.fields.size()));
    std::span<std::byte> s(out);
    std::memcpy(out.data(), kMagic.data(), kMagic.size());
    store_le<std::uint32_t>(s, 8, h.format_version);
    store_le<std::uint64_t>(s, 12, h.num_samples);
    store_le<std::uint16_t>(s, 20, static_cast<std::uint16_t>(h.fields.size()));
    store_le<std::uint64_t>(s, 22, h.page_size);
    store_le<std::uint64_t>(s, 30, h.data_table_offset);
    store_le<std::uint64_t>(s, 38, h.heap_offset);
    store_le<std::uint64_t>(s, 46, h.alloc_table_offset);

    for (std::size_t i = 0; i < h.fields.size(); ++i) {
        const auto& f = h.fields[i];
        auto d = s.subspan(kHeaderPrefixBytes + i * kDescriptorBytes, kDescriptorBytes);
        std::memcpy(d.data(), f.name.data(), f.name.size());
        d[64] = static_cast<std::byte>(f.kind);
        auto params = d.subspan(65, 48);
        if (f.kind == FieldKind::FixedArray) {
            const auto& p = f.array();
            params[0] = static_cast<std::byte>(p.dtype);
            params[1] = static_cast<std::byte>(p.ndims);
            for (std::size_t k = 0; k < kMaxArrayDims; ++k) {
                store_le<std::uint32_t>(params, 2 + 4 * k, p.dims[k]);
            }
        } else if (f.kind == FieldKind::Image) {
            const auto& p = f.image();
            store_le<std::uint16_t>(params, 0, p.max_height);
            store_le<std::uint16_t>(params, 2, p.max_width);
            params[4] = static_cast<std::byte>(p.channels);
        }
        store_le<std::uint32_t>(d, 113, f.row_cell_width());
    }
    return out;
}

DatasetHeader decode_header(std::span<const std::byte> bytes) {
    if (bytes.size() < kHeaderPrefixBytes) {
        fail(Errc::InvalidHeader, "header truncated");
    }
    if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        fail(Errc::BadMagic, "bad magic");
    }
    DatasetHeader h;
    h.format_version = load_le<std::uint32_t>(bytes, 8);
    if (h.format_version != kFormatVersion) {
        fail(Errc::UnsupportedVersion,
             "unsupported format version " + std::to_string(h.format_version));
    }
    h.num_samples = load_le<std::uint64_t>(bytes, 12);
    const std::size_t num_fields = load_le<std::uint16_t>(bytes, 20);
    h.page_size = load_le<std::uint64_t>(bytes, 22);
    h.data_table_offset = load_le<std::uint64_t>(bytes, 30);
    h.heap_offset = load_le<std::uint64_t>(bytes, 38);
    h.alloc_table_offset = load_le<std::uint64_t>(bytes, 46);
    if (bytes.size() < header_byte_length(num_fields)) {
        fail(Errc::InvalidHeader, "field descriptors truncated");
    }

    h.fields.reserve(num_fields);
    for (std::size_t i = 0; i < num_fields; ++i) {
        auto d = bytes.subspan(kHeaderPrefixBytes + i * kDescriptorBytes, kDescriptorBytes);
        const auto* name_begin = reinterpret_cast<const char*>(d.data());
        const auto* name_end = static_cast<const char*>(std::memchr(name_begin, 0, 64));
        if (name_end == nullptr) {
            fail(Errc::InvalidHeader, "field name not terminated");
        }
        FieldDescriptor f;
        f.name.assign(name_begin, name_end);
        const auto kind = std::to_integer<std::uint8_t>(d[64]);
        if (kind > 4) {
            fail(Errc::InvalidHeader, "unknown field kind " + std::to_string(kind));
        }
        f.kind = static_cast<FieldKind>(kind);
        auto params = d.subspan(65, 48);
        if (f.kind == FieldKind::FixedArray) {
            ArrayParams p;
            p.dtype = static_cast<Dtype>(std::to_integer<std::uint8_t>(params[0]));
            p.ndims = std::to_integer<std::uint8_t>(params[1]);
            for (std::size_t k = 0; k < kMaxArrayDims; ++k) {
                p.dims[k] = load_le<std::uint32_t>(params, 2 + 4 * k);
            }
            f.params = p;
        } else if (f.kind == FieldKind::Image) {
            ImageParams p;
            p.max_height = load_le<std::uint16_t>(params, 0);
            p.max_width = load_le<std::uint16_t>(params, 2);
            p.channels = std::to_integer<std::uint8_t>(params[4]);
            f.params = p;
        }
        if (load_le<std::uint32_t>(d, 113) != cell_width(f.kind)) {
            fail(Errc::InvalidHeader, "row_cell_width disagrees with kind for '" + f.name + "'");
        }
        h.fields.push_back(std::move(f));
    }
    check_header(h);
    return h;
}

//------------------------------------------------------------------------------
// Rows

RowLayout::RowLayout(std::span<const FieldDescriptor> schema) {
    offsets_.reserve(schema.size());
    for (const auto& f : schema) {
        offsets_.push_back(width_);
        width_ += f.row_cell_width();
    }
}

void encode_row_into(std::span<const FieldDescriptor> schema, std::span<const Cell> cells,
                     std::span<std::byte> out) {
    if (cells.size() != schema.size()) {
        fail(Errc::SchemaMismatch, "row has " + std::to_string(cells.size()) +
                                       " cells, schema has " + std::to_string(schema.size()));
    }
    std::size_t pos = 0;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const auto& f = schema[i];
        if (cells[i].index() != static_cast<std::size_t>(f.kind)) {
            fail(Errc::SchemaMismatch, "cell kind mismatch for field '" + f.name + "'");
        }
        if (out.size() < pos + f.row_cell_width()) {
            fail(Errc::SchemaMismatch, "row buffer too small");
        }
        switch (f.kind) {
        case FieldKind::IntScalar:
            store_le<std::int64_t>(out, pos, std::get<std::int64_t>(cells[i]));
            break;
        case FieldKind::FloatScalar:
            store_le<double>(out, pos, std::get<double>(cells[i]));
            break;
        case FieldKind::FixedArray:
            store_le<std::uint64_t>(out, pos, std::get<ArrayRef>(cells[i]).offset);
            break;
        case FieldKind::VarBytes: {
            const auto& r = std::get<BytesRef>(cells[i]);
            store_le<std::uint64_t>(out, pos, r.offset);
            store_le<std::uint64_t>(out, pos + 8, r.length);
            break;
        }
        case FieldKind::Image: {
            const auto& r = std::get<ImageRef>(cells[i]);
            store_le<std::uint64_t>(out, pos, r.offset);
            store_le<std::uint64_t>(out, pos + 8, r.length);
            store_le<std::uint16_t>(out, pos + 16, r.height);
            store_le<std::uint16_t>(out, pos + 18, r.width);
            out[pos + 20] = static_cast<std::byte>(r.channels);
            out[pos + 21] = static_cast<std::byte>(r.codec);
            out[pos + 22] = std::byte{0};
            out[pos + 23] = std::byte{0};
            break;
        }
        }
        pos += f.row_cell_width();
    }
}

std::vector<std::byte> encode_row(std::span<const FieldDescriptor> schema,
                                  std::span<const Cell> cells) {
    std::vector<std::byte> out(row_width(schema));
    encode_row_into(schema, cells, out);
    return out;
}

Cell decode_cell(const FieldDescriptor& field, std::span<const std::byte> c) {
    switch (field.kind) {
    case FieldKind::IntScalar:
        return load_le<std::int64_t>(c, 0);
    case FieldKind::FloatScalar:
        return load_le<double>(c, 0);
    case FieldKind::FixedArray:
        return ArrayRef{load_le<std::uint64_t>(c, 0)};
    case FieldKind::VarBytes:
        return BytesRef{load_le<std::uint64_t>(c, 0), load_le<std::uint64_t>(c, 8)};
    case FieldKind::Image:
        return ImageRef{load_le<std::uint64_t>(c, 0),
                        load_le<std::uint64_t>(c, 8),
                        load_le<std::uint16_t>(c, 16),
                        load_le<std::uint16_t>(c, 18),
                        std::to_integer<std::uint8_t>(c[20]),
                        static_cast<CodecId>(std::to_integer<std::uint8_t>(c[21]))};
    }
    fail(Errc::SchemaMismatch, "unknown field kind");
}

std::vector<Cell> decode_row(std::span<const FieldDescriptor> schema,
                             std::span<const std::byte> row) {
    if (row.size() != row_width(schema)) {
        fail(Errc::SchemaMismatch, "row length does not match schema width");
    }
    std::vector<Cell> cells;
    cells.reserve(schema.size());
    std::size_t pos = 0;
    for (const auto& f : schema) {
        cells.push_back(decode_cell(f, row.subspan(pos, f.row_cell_width())));
        pos += f.row_cell_width();
    }
    return cells;
}

//------------------------------------------------------------------------------
// Allocation Table

std::vector<std::byte> encode_alloc_table(std::span<const Region> regions) {
    std::vector<std::byte> out(8 + 16 * regions.size());
    std::span<std::byte> s(out);
    store_le<std::uint64_t>(s, 0, regions.size());
    for (std::size_t i = 0; i < regions.size(); ++i) {
        store_le<std::uint64_t>(s, 8 + 16 * i, regions[i].offset);
        store_le<std::uint64_t>(s, 16 + 16 * i, regions[i].length);
    }
    return out;
}

std::vector<Region> decode_alloc_table(std::span<const std::byte> bytes) {
    if (bytes.size() < 8) {
        fail(Errc::InvalidFile, "allocation table truncated");
    }
    const std::uint64_t count = load_le<std::uint64_t>(bytes, 0);
    if (count > (bytes.size() - 8) / 16 || bytes.size() != 8 + 16 * count) {
        fail(Errc::InvalidFile, "allocation table length mismatch");
    }
    std::vector<Region> regions(count);
    for (std::size_t i = 0; i < count; ++i) {
        regions[i].offset = load_le<std::uint64_t>(bytes, 8 + 16 * i);
        regions[i].length = load_le<std::uint64_t>(bytes, 16 + 16 * i);
    }
    return regions;
}

//------------------------------------------------------------------------------
// Validation

std::size_t ValidationReport::count(std::string_view kind) const {
    return static_cast<std::size_t>(std::count_if(
        violations.begin(), violations.end(), [&](const Violation& v) { return v.kind == kind; }));
}

namespace {

class Validator {
public:
    explicit Validator(std::span<const std::byte> file) : file_(file) {}

    ValidationReport run() {
        DatasetHeader h;
        try {
            h = decode_header(file_);
        } catch (const Error& e) {
            switch (e.code()) {
            case Errc::BadMagic: add("bad magic", e.what()); break;
            case Errc::UnsupportedVersion: add("unsupported version", e.what()); break;
            default: add("invalid header", e.what()); break;
            }
            return std::move(report_);
        }
        if (h.alloc_table_offset > file_.size()) {
            add("invalid header", "alloc_table_offset beyond end of file");
            return std::move(report_);
        }

        std::vector<Region> regions;
        try {
            regions = decode_alloc_table(file_.subspan(h.alloc_table_offset));
        } catch (const Error& e) {
            add("file length mismatch", e.what());
            return std::move(report_);
        }
        check_regions(h, regions);
        check_rows(h, regions);
        return std::move(report_);
    }

private:
    void add(std::string kind, std::string detail) {
        report_.violations.push_back({std::move(kind), std::move(detail)});
    }

    void check_regions(const DatasetHeader& h, const std::vector<Region>& regions) {
        for (std::size_t i = 0; i < regions.size(); ++i) {
            const auto& r = regions[i];
            const std::string where = "region " + std::to_string(i);
            if (r.length == 0) {
                add("empty region", where);
            }
            if (r.offset < h.heap_offset || r.offset + r.length > h.alloc_table_offset ||
                r.offset + r.length < r.offset) {
                add("region outside heap", where);
                continue;
            }
            const std::uint64_t rel = r.offset - h.heap_offset;
            if (r.length > h.page_size) {
                if (rel % h.page_size != 0) {
                    add("region crosses page boundary", where + " (oversize, not page aligned)");
                }
            } else if (r.length > 0 &&
                       rel / h.page_size != (rel + r.length - 1) / h.page_size) {
                add("region crosses page boundary", where);
            }
            if (i > 0) {
                const auto& prev = regions[i - 1];
                if (r.offset < prev.offset) {
                    add("unsorted regions", where);
                } else if (r.offset < prev.offset + prev.length) {
                    add("overlapping regions", where);
                }
            }
        }
        sorted_ = regions;
        std::sort(sorted_.begin(), sorted_.end());
    }

    bool contained(std::uint64_t offset, std::uint64_t length) const {
        if (length == 0) {
            return true;
        }
        auto it = std::upper_bound(sorted_.begin(), sorted_.end(), offset,
                                   [](std::uint64_t off, const Region& r) { return off < r.offset; });
        if (it == sorted_.begin()) {
            return false;
        }
        --it;
        return offset + length >= offset && offset + length <= it->offset + it->length;
    }

    void check_rows(const DatasetHeader& h, const std::vector<Region>&) {
        const RowLayout layout(h.fields);
        for (std::uint64_t i = 0; i < h.num_samples; ++i) {
            const auto row = file_.subspan(h.data_table_offset + i * layout.width(), layout.width());
            for (std::size_t f = 0; f < h.fields.size(); ++f) {
                const auto& field = h.fields[f];
                const Cell cell = decode_cell(field, row.subspan(layout.offset(f), field.row_cell_width()));
                const std::string where = "sample " + std::to_string(i) + " field '" + field.name + "'";
                std::uint64_t offset = 0;
                std::uint64_t length = 0;
                switch (field.kind) {
                case FieldKind::FixedArray:
                    offset = std::get<ArrayRef>(cell).offset;
                    length = field.array().byte_length();
                    break;
                case FieldKind::VarBytes:
                    offset = std::get<BytesRef>(cell).offset;
                    length = std::get<BytesRef>(cell).length;
                    break;
                case FieldKind::Image: {
                    const auto& ref = std::get<ImageRef>(cell);
                    offset = ref.offset;
                    length = ref.length;
                    check_image_cell(field.image(), ref, where);
                    break;
                }
                default:
                    continue;
                }
                if (!contained(offset, length)) {
                    add("dangling heap reference", where);
                }
            }
        }
    }

    void check_image_cell(const ImageParams& limits, const ImageRef& ref, const std::string& where) {
        if (ref.height == 0 || ref.width == 0 || ref.height > limits.max_height ||
            ref.width > limits.max_width || ref.channels != limits.channels) {
            add("invalid image cell", where + " (dims)");
            return;
        }
        if (static_cast<unsigned>(ref.codec) > 2) {
            add("invalid image cell", where + " (codec)");
            return;
        }
        if (!payload_length_plausible(ref.codec, ref.height, ref.width, ref.channels, ref.length)) {
            add("invalid image cell", where + " (payload length)");
        }
    }

    std::span<const std::byte> file_;
    ValidationReport report_;
    std::vector<Region> sorted_;
};

} // namespace

ValidationReport validate_bytes(std::span<const std::byte> file) { return Validator(file).run(); }

ValidationReport validate_file(const std::filesystem::path& path) {
    File f(path, File::Mode::Read);
    MappedFile map(f);
    return validate_bytes(map.bytes());
}

} // namespace bbox
