#include "bbox/sample.hpp"

#include "bbox/endian.hpp"
#include "bbox/error.hpp"
#include "bbox/io.hpp"
#include "bbox/random.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstring>

namespace bbox {

void check_sample(std::span<const FieldDescriptor> schema, const Sample& sample) {
    if (sample.size() != schema.size()) {
        fail(Errc::SchemaMismatch, "sample has " + std::to_string(sample.size()) +
                                       " values, schema has " + std::to_string(schema.size()));
    }
    for (std::size_t i = 0; i < schema.size(); ++i) {
        const auto& f = schema[i];
        if (sample[i].index() != static_cast<std::size_t>(f.kind)) {
            fail(Errc::SchemaMismatch, "value kind mismatch for field '" + f.name + "'");
        }
        if (f.kind == FieldKind::FixedArray &&
            std::get<FixedArrayValue>(sample[i]).data.size() != f.array().byte_length()) {
            fail(Errc::SchemaMismatch, "array size mismatch for field '" + f.name + "'");
        }
        if (f.kind == FieldKind::Image) {
            const auto& img = std::get<ImageValue>(sample[i]);
            const auto& lim = f.image();
            if (img.pixels.size() != std::size_t{img.height} * img.width * img.channels) {
                fail(Errc::SchemaMismatch, "pixel count mismatch for field '" + f.name + "'");
            }
            if (img.height > lim.max_height || img.width > lim.max_width ||
                img.channels != lim.channels) {
                fail(Errc::DimsExceedMax, "image exceeds limits of field '" + f.name + "'");
            }
        }
    }
}

InMemorySource::InMemorySource(Schema schema, std::vector<Sample> samples)
    : schema_(std::move(schema)), samples_(std::move(samples)) {}

//------------------------------------------------------------------------------
// Synthetic

SyntheticSpec parse_synthetic_spec(std::string_view text) {
    constexpr std::string_view prefix = "synthetic:";
    if (text.substr(0, prefix.size()) == prefix) {
        text.remove_prefix(prefix.size());
    }
    std::uint64_t parts[4] = {0, 0, 0, 0};
    for (int k = 0; k < 4; ++k) {
        const auto* end = text.data() + text.size();
        auto [ptr, ec] = std::from_chars(text.data(), end, parts[k]);
        if (ec != std::errc{} || (k < 3 && (ptr == end || *ptr != 'x')) || (k == 3 && ptr != end)) {
            fail(Errc::InvalidConfig, "synthetic spec must look like synthetic:NxHxWxC");
        }
        text.remove_prefix(static_cast<std::size_t>(ptr - text.data()) + (k < 3 ? 1 : 0));
    }
    if (parts[1] == 0 || parts[2] == 0 || parts[3] == 0 || parts[1] > 0xffff ||
        parts[2] > 0xffff || parts[3] > 0xff) {
        fail(Errc::InvalidConfig, "synthetic image dims out of range");
    }
    SyntheticSpec spec;
    spec.num_samples = parts[0];
    spec.height = static_cast<std::uint16_t>(parts[1]);
    spec.width = static_cast<std::uint16_t>(parts[2]);
    spec.channels = static_cast<std::uint8_t>(parts[3]);
    return spec;
}

SyntheticSource::SyntheticSource(const SyntheticSpec& spec)
    : spec_(spec),
      schema_{FieldDescriptor::int_scalar("label"),
              FieldDescriptor::image("image", spec.height, spec.width, spec.channels)} {}

Sample SyntheticSource::get(std::uint64_t index) const {
    if (index >= spec_.num_samples) {
        fail(Errc::IndexOutOfRange, "synthetic index out of range");
    }
    constexpr std::uint32_t kBlock = 4;
    const std::uint64_t key = mix_keys({spec_.seed, index});
    ImageValue img{spec_.height, spec_.width, spec_.channels, {}};
    img.pixels.resize(std::size_t{img.height} * img.width * img.channels);
    const std::uint32_t blocks_x = static_cast<std::uint32_t>(ceil_div(img.width, kBlock));
    for (std::uint32_t y = 0; y < img.height; ++y) {
        for (std::uint32_t x = 0; x < img.width; ++x) {
            const std::uint64_t block = std::uint64_t{y / kBlock} * blocks_x + x / kBlock;
            const auto v = static_cast<std::uint8_t>(mix_keys({key, block}) >> 56);
            std::memset(img.pixels.data() + (std::size_t{y} * img.width + x) * img.channels, v,
                        img.channels);
        }
    }
    const auto label = static_cast<std::int64_t>(mix64(key) % std::max<std::uint32_t>(1, spec_.num_classes));
    return Sample{label, std::move(img)};
}

//------------------------------------------------------------------------------
// Raster files

ImageValue parse_raster(std::span<const std::byte> bytes) {
    if (bytes.size() < kRasterHeaderBytes) {
        fail(Errc::SourceError, "raster file truncated");
    }
    const auto h = load_le<std::uint32_t>(bytes, 0);
    const auto w = load_le<std::uint32_t>(bytes, 4);
    const auto c = load_le<std::uint32_t>(bytes, 8);
    if (h == 0 || w == 0 || c == 0 || h > 0xffff || w > 0xffff || c > 0xff) {
        fail(Errc::SourceError, "raster dims out of range");
    }
    const std::size_t n = std::size_t{h} * w * c;
    if (bytes.size() != kRasterHeaderBytes + n) {
        fail(Errc::SourceError, "raster payload length mismatch");
    }
    ImageValue img{static_cast<std::uint16_t>(h), static_cast<std::uint16_t>(w),
                   static_cast<std::uint8_t>(c), std::vector<std::uint8_t>(n)};
    std::memcpy(img.pixels.data(), bytes.data() + kRasterHeaderBytes, n);
    return img;
}

ImageValue read_raster(const std::filesystem::path& path) {
    File f(path, File::Mode::Read);
    std::vector<std::byte> bytes(f.size());
    f.read_at(0, bytes);
    return parse_raster(bytes);
}

void write_raster(const std::filesystem::path& path, const ImageValue& image) {
    std::vector<std::byte> bytes(kRasterHeaderBytes + image.pixels.size());
    store_le<std::uint32_t>(bytes, 0, image.height);
    store_le<std::uint32_t>(bytes, 4, image.width);
    store_le<std::uint32_t>(bytes, 8, image.channels);
    std::memcpy(bytes.data() + kRasterHeaderBytes, image.pixels.data(), image.pixels.size());
    File f(path, File::Mode::Write);
    f.write_at(0, bytes);
}

void export_tree(const SampleSource& source, const std::filesystem::path& root) {
    const auto& schema = source.schema();
    if (schema.size() != 2 || schema[0].kind != FieldKind::IntScalar ||
        schema[1].kind != FieldKind::Image) {
        fail(Errc::SchemaMismatch, "tree export needs schema [int label, image]");
    }
    std::filesystem::create_directories(root);
    char name[32];
    for (std::uint64_t i = 0; i < source.size(); ++i) {
        const Sample s = source.get(i);
        const auto label = std::get<std::int64_t>(s[0]);
        if (label < 0) {
            fail(Errc::SchemaMismatch, "tree export needs non-negative labels");
        }
        std::snprintf(name, sizeof(name), "%06lld", static_cast<long long>(label));
        const auto dir = root / name;
        std::filesystem::create_directories(dir);
        std::snprintf(name, sizeof(name), "%010llu.raw", static_cast<unsigned long long>(i));
        write_raster(dir / name, std::get<ImageValue>(s[1]));
    }
}

//------------------------------------------------------------------------------
// Directory trees

namespace {

bool all_digits(const std::string& s) {
    return !s.empty() && s.size() < 18 &&
           std::all_of(s.begin(), s.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
}

} // namespace

DirectorySource::DirectorySource(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) {
        fail(Errc::SourceError, "not a directory: " + root.string());
    }
    std::vector<std::filesystem::path> label_dirs;
    for (const auto& e : std::filesystem::directory_iterator(root)) {
        if (e.is_directory()) {
            label_dirs.push_back(e.path());
        }
    }
    std::sort(label_dirs.begin(), label_dirs.end());
    const bool numeric = std::all_of(label_dirs.begin(), label_dirs.end(), [](const auto& p) {
        return all_digits(p.filename().string());
    });

    std::uint16_t max_h = 0;
    std::uint16_t max_w = 0;
    int channels = -1;
    std::byte head[kRasterHeaderBytes];
    for (std::size_t d = 0; d < label_dirs.size(); ++d) {
        const std::int64_t label =
            numeric ? std::stoll(label_dirs[d].filename().string()) : static_cast<std::int64_t>(d);
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(label_dirs[d])) {
            if (e.is_regular_file()) {
                files.push_back(e.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (auto& p : files) {
            File f(p, File::Mode::Read);
            if (f.size() < kRasterHeaderBytes) {
                fail(Errc::SourceError, "raster file truncated: " + p.string());
            }
            f.read_at(0, head);
            const auto h = load_le<std::uint32_t>(head, 0);
            const auto w = load_le<std::uint32_t>(head, 4);
            const auto c = load_le<std::uint32_t>(head, 8);
            if (h == 0 || w == 0 || c == 0 || h > 0xffff || w > 0xffff || c > 0xff) {
                fail(Errc::SourceError, "raster dims out of range: " + p.string());
            }
            if (channels >= 0 && static_cast<int>(c) != channels) {
                fail(Errc::SourceError, "mixed channel counts in tree");
            }
            channels = static_cast<int>(c);
            max_h = std::max(max_h, static_cast<std::uint16_t>(h));
            max_w = std::max(max_w, static_cast<std::uint16_t>(w));
            entries_.push_back({std::move(p), label});
        }
    }
    if (channels < 0) {
        max_h = max_w = 1;
        channels = 1;
    }
    schema_ = {FieldDescriptor::int_scalar("label"),
               FieldDescriptor::image("image", max_h, max_w, static_cast<std::uint8_t>(channels))};
}

Sample DirectorySource::get(std::uint64_t index) const {
    const auto& e = entries_.at(index);
    return Sample{e.label, read_raster(e.path)};
}

} // namespace bbox
