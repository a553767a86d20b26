#pragma once

#include "bbox/format.hpp"
#include "bbox/random.hpp"
#include "bbox/sample.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>
#include <system_error>
#include <vector>

namespace bbox::testing {

class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "bbox-test-XXXXXX").string();
        if (::mkdtemp(tmpl.data()) == nullptr) {
            throw std::system_error(errno, std::generic_category(), "mkdtemp");
        }
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::vector<std::byte> random_bytes(SplitMix64& rng, std::size_t n) {
    std::vector<std::byte> out(n);
    for (auto& b : out) {
        b = static_cast<std::byte>(rng.next() & 0xff);
    }
    return out;
}

// Pixels with runs, so RLE has something to compress.
inline ImageValue random_image(SplitMix64& rng, std::uint16_t max_h, std::uint16_t max_w, std::uint8_t c) {
    ImageValue img;
    img.height = static_cast<std::uint16_t>(1 + rng.below(max_h));
    img.width = static_cast<std::uint16_t>(1 + rng.below(max_w));
    img.channels = c;
    img.pixels.resize(std::size_t{img.height} * img.width * c);
    std::uint8_t v = 0;
    for (auto& p : img.pixels) {
        if (rng.below(4) == 0) {
            v = static_cast<std::uint8_t>(rng.next() & 0xff);
        }
        p = v;
    }
    return img;
}

inline Schema mixed_schema() {
    return {FieldDescriptor::int_scalar("id"),
            FieldDescriptor::float_scalar("score"),
            FieldDescriptor::fixed_array("vec", Dtype::F32, {3, 2}),
            FieldDescriptor::var_bytes("blob"),
            FieldDescriptor::image("image", 24, 24, 3)};
}

// Mixed-modality samples for `mixed_schema()`. Roughly one blob in
// `oversize_every` exceeds `page_size` when that is nonzero.
inline std::vector<Sample> mixed_samples(SplitMix64& rng, std::size_t n, std::uint64_t page_size = 0,
                                         std::uint64_t oversize_every = 0) {
    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.emplace_back(static_cast<std::int64_t>(rng.next()));
        s.emplace_back(static_cast<double>(static_cast<std::int64_t>(rng.next() >> 11)) * 0x1p-20);
        s.emplace_back(FixedArrayValue{random_bytes(rng, 24)});
        std::size_t len = static_cast<std::size_t>(rng.below(700));
        if (page_size != 0 && oversize_every != 0 && rng.below(oversize_every) == 0) {
            len = static_cast<std::size_t>(page_size + rng.below(2 * page_size));
        }
        s.emplace_back(BytesValue{random_bytes(rng, len)});
        s.emplace_back(random_image(rng, 24, 24, 3));
        out.push_back(std::move(s));
    }
    return out;
}

// [label, image] samples with deterministic content.
inline std::vector<Sample> labelled_images(std::size_t n, std::uint16_t h, std::uint16_t w, std::uint8_t c,
                                           std::uint64_t seed = 1, bool vary_dims = false) {
    SplitMix64 rng(seed);
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.emplace_back(static_cast<std::int64_t>(rng.below(10)));
        ImageValue img = vary_dims ? random_image(rng, h, w, c) : ImageValue{};
        if (!vary_dims) {
            img.height = h;
            img.width = w;
            img.channels = c;
            img.pixels.resize(std::size_t{h} * w * c);
            for (auto& p : img.pixels) {
                p = static_cast<std::uint8_t>(rng.next() & 0xff);
            }
        }
        s.emplace_back(std::move(img));
        out.push_back(std::move(s));
    }
    return out;
}

inline Schema image_schema(std::uint16_t h, std::uint16_t w, std::uint8_t c) {
    return {FieldDescriptor::int_scalar("label"), FieldDescriptor::image("image", h, w, c)};
}

} // namespace bbox::testing
