#pragma once

#include "bbox/format.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace bbox {

// An encoded image as stored in the heap.
struct ImageBlob {
    std::uint16_t height = 0;
    std::uint16_t width = 0;
    std::uint8_t channels = 0;
    CodecId codec = CodecId::Raw;
    std::vector<std::byte> payload;
};

// Non-owning view of an encoded image (heap bytes stay where they are).
struct EncodedImage {
    std::uint16_t height = 0;
    std::uint16_t width = 0;
    std::uint8_t channels = 0;
    CodecId codec = CodecId::Raw;
    std::span<const std::byte> payload;

    std::size_t decoded_size() const noexcept {
        return std::size_t{height} * width * channels;
    }
};

inline constexpr std::size_t kRleRunBytes = 5;

std::uint64_t subsample2_size(std::uint32_t height, std::uint32_t width, std::uint32_t channels);

// Upper bound on the payload any codec can produce for the given dims.
std::uint64_t max_payload_length(CodecId codec, std::uint32_t height, std::uint32_t width,
                                 std::uint32_t channels);

// Cheap structural check used by the validator.
bool payload_length_plausible(CodecId codec, std::uint32_t height, std::uint32_t width,
                              std::uint32_t channels, std::uint64_t length);

// `pixels` is row-major H x W x C. `limits`, when given, bounds H and W.
ImageBlob encode_image(std::span<const std::uint8_t> pixels, std::uint16_t height,
                       std::uint16_t width, std::uint8_t channels, CodecId codec,
                       const ImageParams* limits = nullptr);

// Writes exactly height*width*channels bytes into `out`; never allocates.
void decode_image(const EncodedImage& image, std::span<std::uint8_t> out);

inline EncodedImage view_of(const ImageBlob& blob) {
    return {blob.height, blob.width, blob.channels, blob.codec, blob.payload};
}

} // namespace bbox
