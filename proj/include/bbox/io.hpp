#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>

namespace bbox {

// RAII wrapper over a POSIX file descriptor with full-length positional I/O.
class File {
public:
    enum class Mode { Read, Write };

    File() = default;
    File(const std::filesystem::path& path, Mode mode);
    ~File();

    File(File&& other) noexcept;
    File& operator=(File&& other) noexcept;
    File(const File&) = delete;
    File& operator=(const File&) = delete;

    bool is_open() const noexcept { return fd_ >= 0; }
    int fd() const noexcept { return fd_; }

    std::uint64_t size() const;
    void read_at(std::uint64_t offset, std::span<std::byte> out) const;
    void write_at(std::uint64_t offset, std::span<const std::byte> data);
    void truncate(std::uint64_t length);
    void close();

private:
    int fd_ = -1;
    std::filesystem::path path_;
};

// Read-only shared mapping of a whole file.
class MappedFile {
public:
    MappedFile() = default;
    explicit MappedFile(const File& file);
    ~MappedFile();

    MappedFile(MappedFile&& other) noexcept;
    MappedFile& operator=(MappedFile&& other) noexcept;
    MappedFile(const MappedFile&) = delete;
    MappedFile& operator=(const MappedFile&) = delete;

    std::span<const std::byte> bytes() const noexcept {
        return {static_cast<const std::byte*>(data_), size_};
    }

private:
    void unmap() noexcept;

    void* data_ = nullptr;
    std::size_t size_ = 0;
};

// Stalls the calling thread to emulate a device with a fixed per-read
// service time. Timer overshoot is credited against the thread's next
// stall, so n calls take n * latency plus at most one overshoot. Returns
// the measured stall.
std::chrono::nanoseconds inject_latency(std::chrono::nanoseconds latency);

} // namespace bbox
