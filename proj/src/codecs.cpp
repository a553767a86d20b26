#include "bbox/codecs.hpp"

#include "bbox/endian.hpp"
#include "bbox/error.hpp"

#include <cstring>
#include <limits>
#include <string>

namespace bbox {

std::uint64_t subsample2_size(std::uint32_t height, std::uint32_t width, std::uint32_t channels) {
    return ceil_div(height, 2) * ceil_div(width, 2) * channels;
}

std::uint64_t max_payload_length(CodecId codec, std::uint32_t height, std::uint32_t width,
                                 std::uint32_t channels) {
    const std::uint64_t n = std::uint64_t{height} * width * channels;
    switch (codec) {
    case CodecId::Raw: return n;
    case CodecId::Rle: return kRleRunBytes * n;
    case CodecId::Subsample2: return subsample2_size(height, width, channels);
    }
    return n;
}

bool payload_length_plausible(CodecId codec, std::uint32_t height, std::uint32_t width,
                              std::uint32_t channels, std::uint64_t length) {
    switch (codec) {
    case CodecId::Raw:
        return length == std::uint64_t{height} * width * channels;
    case CodecId::Subsample2:
        return length == subsample2_size(height, width, channels);
    case CodecId::Rle:
        return length >= kRleRunBytes && length % kRleRunBytes == 0 &&
               length <= max_payload_length(codec, height, width, channels);
    }
    return false;
}

namespace {

std::vector<std::byte> rle_encode(std::span<const std::uint8_t> pixels) {
    std::vector<std::byte> out;
    std::size_t i = 0;
    while (i < pixels.size()) {
        const std::uint8_t value = pixels[i];
        std::size_t j = i + 1;
        while (j < pixels.size() && pixels[j] == value &&
               j - i < std::numeric_limits<std::uint32_t>::max()) {
            ++j;
        }
        const std::size_t pos = out.size();
        out.resize(pos + kRleRunBytes);
        store_le<std::uint32_t>(out, pos, static_cast<std::uint32_t>(j - i));
        out[pos + 4] = static_cast<std::byte>(value);
        i = j;
    }
    return out;
}

void rle_decode(std::span<const std::byte> payload, std::span<std::uint8_t> out) {
    if (payload.size() % kRleRunBytes != 0) {
        fail(Errc::CorruptPayload, "RLE payload is not a whole number of runs");
    }
    std::size_t pos = 0;
    for (std::size_t r = 0; r < payload.size(); r += kRleRunBytes) {
        const std::uint32_t count = load_le<std::uint32_t>(payload, r);
        const auto value = std::to_integer<std::uint8_t>(payload[r + 4]);
        if (count == 0) {
            fail(Errc::CorruptPayload, "RLE run of length zero");
        }
        if (count > out.size() - pos) {
            fail(Errc::CorruptPayload, "RLE runs overflow the image");
        }
        std::memset(out.data() + pos, value, count);
        pos += count;
    }
    if (pos != out.size()) {
        fail(Errc::CorruptPayload, "RLE runs cover " + std::to_string(pos) + " of " +
                                       std::to_string(out.size()) + " bytes");
    }
}

std::vector<std::byte> subsample_encode(std::span<const std::uint8_t> pixels, std::uint32_t h,
                                        std::uint32_t w, std::uint32_t c) {
    const std::uint32_t sh = static_cast<std::uint32_t>(ceil_div(h, 2));
    const std::uint32_t sw = static_cast<std::uint32_t>(ceil_div(w, 2));
    std::vector<std::byte> out(std::size_t{sh} * sw * c);
    for (std::uint32_t y = 0; y < sh; ++y) {
        for (std::uint32_t x = 0; x < sw; ++x) {
            const std::uint8_t* src = pixels.data() + (std::size_t{2 * y} * w + 2 * x) * c;
            std::memcpy(out.data() + (std::size_t{y} * sw + x) * c, src, c);
        }
    }
    return out;
}

void subsample_decode(std::span<const std::byte> payload, std::uint32_t h, std::uint32_t w,
                      std::uint32_t c, std::span<std::uint8_t> out) {
    const std::uint32_t sw = static_cast<std::uint32_t>(ceil_div(w, 2));
    if (payload.size() != subsample2_size(h, w, c)) {
        fail(Errc::CorruptPayload, "subsampled payload has wrong length");
    }
    for (std::uint32_t y = 0; y < h; ++y) {
        for (std::uint32_t x = 0; x < w; ++x) {
            const std::byte* src = payload.data() + (std::size_t{y / 2} * sw + x / 2) * c;
            std::memcpy(out.data() + (std::size_t{y} * w + x) * c, src, c);
        }
    }
}

} // namespace

ImageBlob encode_image(std::span<const std::uint8_t> pixels, std::uint16_t height,
                       std::uint16_t width, std::uint8_t channels, CodecId codec,
                       const ImageParams* limits) {
    if (height == 0 || width == 0 || channels == 0) {
        fail(Errc::SchemaMismatch, "image dims must be nonzero");
    }
    if (pixels.size() != std::size_t{height} * width * channels) {
        fail(Errc::SchemaMismatch, "pixel buffer size does not match H x W x C");
    }
    if (limits != nullptr &&
        (height > limits->max_height || width > limits->max_width || channels != limits->channels)) {
        fail(Errc::DimsExceedMax, std::to_string(height) + "x" + std::to_string(width) + "x" +
                                      std::to_string(channels) + " exceeds field limits");
    }
    ImageBlob blob{height, width, channels, codec, {}};
    switch (codec) {
    case CodecId::Raw:
        blob.payload.resize(pixels.size());
        std::memcpy(blob.payload.data(), pixels.data(), pixels.size());
        break;
    case CodecId::Rle:
        blob.payload = rle_encode(pixels);
        break;
    case CodecId::Subsample2:
        blob.payload = subsample_encode(pixels, height, width, channels);
        break;
    default:
        fail(Errc::SchemaMismatch, "unknown codec");
    }
    return blob;
}

void decode_image(const EncodedImage& image, std::span<std::uint8_t> out) {
    if (out.size() != image.decoded_size()) {
        fail(Errc::SchemaMismatch, "output buffer must hold exactly H x W x C bytes");
    }
    switch (image.codec) {
    case CodecId::Raw:
        if (image.payload.size() != out.size()) {
            fail(Errc::CorruptPayload, "raw payload has wrong length");
        }
        std::memcpy(out.data(), image.payload.data(), out.size());
        return;
    case CodecId::Rle:
        rle_decode(image.payload, out);
        return;
    case CodecId::Subsample2:
        subsample_decode(image.payload, image.height, image.width, image.channels, out);
        return;
    }
    fail(Errc::CorruptPayload, "unknown codec id");
}

} // namespace bbox
