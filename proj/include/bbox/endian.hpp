#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <type_traits>
#include <utility>

namespace bbox {

template <typename T>
constexpr T byteswap(T value) noexcept {
    static_assert(std::is_integral_v<T>);
    auto bytes = std::bit_cast<std::array<std::byte, sizeof(T)>>(value);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
        std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
    return std::bit_cast<T>(bytes);
}

// Little-endian stores/loads at an arbitrary (possibly unaligned) position.
template <typename T>
inline void store_le(std::span<std::byte> out, std::size_t pos, T value) noexcept {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    U raw = std::bit_cast<U>(value);
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        raw = byteswap(raw);
    }
    std::memcpy(out.data() + pos, &raw, sizeof(T));
}

template <typename T>
inline T load_le(std::span<const std::byte> in, std::size_t pos) noexcept {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    U raw;
    std::memcpy(&raw, in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        raw = byteswap(raw);
    }
    return std::bit_cast<T>(raw);
}

constexpr bool is_power_of_two(std::uint64_t v) noexcept {
    return v != 0 && (v & (v - 1)) == 0;
}

constexpr std::uint64_t align_up(std::uint64_t v, std::uint64_t alignment) noexcept {
    return (v + alignment - 1) / alignment * alignment;
}

constexpr std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) noexcept {
    return (a + b - 1) / b;
}

} // namespace bbox
