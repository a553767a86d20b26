#include "bbox/io.hpp"

#include "bbox/error.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <thread>
#include <unistd.h>
#include <utility>

namespace bbox {

namespace {

[[noreturn]] void io_fail(const std::string& what, const std::filesystem::path& path) {
    fail(Errc::Io, what + " '" + path.string() + "': " + std::strerror(errno));
}

} // namespace

File::File(const std::filesystem::path& path, Mode mode) : path_(path) {
    const int flags = mode == Mode::Read ? O_RDONLY : (O_RDWR | O_CREAT | O_TRUNC);
    fd_ = ::open(path.c_str(), flags | O_CLOEXEC, 0644);
    if (fd_ < 0) {
        io_fail("cannot open", path);
    }
}

File::~File() { close(); }

File::File(File&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), path_(std::move(other.path_)) {}

File& File::operator=(File&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = std::exchange(other.fd_, -1);
        path_ = std::move(other.path_);
    }
    return *this;
}

void File::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

std::uint64_t File::size() const {
    struct stat st {};
    if (::fstat(fd_, &st) != 0) {
        io_fail("cannot stat", path_);
    }
    return static_cast<std::uint64_t>(st.st_size);
}

void File::read_at(std::uint64_t offset, std::span<std::byte> out) const {
    std::size_t done = 0;
    while (done < out.size()) {
        const ssize_t n = ::pread(fd_, out.data() + done, out.size() - done,
                                  static_cast<off_t>(offset + done));
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            io_fail("read failed on", path_);
        }
        if (n == 0) {
            fail(Errc::Io, "unexpected end of file in '" + path_.string() + "'");
        }
        done += static_cast<std::size_t>(n);
    }
}

void File::write_at(std::uint64_t offset, std::span<const std::byte> data) {
    std::size_t done = 0;
    while (done < data.size()) {
        const ssize_t n = ::pwrite(fd_, data.data() + done, data.size() - done,
                                   static_cast<off_t>(offset + done));
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            io_fail("write failed on", path_);
        }
        done += static_cast<std::size_t>(n);
    }
}

void File::truncate(std::uint64_t length) {
    if (::ftruncate(fd_, static_cast<off_t>(length)) != 0) {
        io_fail("cannot resize", path_);
    }
}

MappedFile::MappedFile(const File& file) {
    size_ = file.size();
    if (size_ == 0) {
        return;
    }
    data_ = ::mmap(nullptr, size_, PROT_READ, MAP_SHARED, file.fd(), 0);
    if (data_ == MAP_FAILED) {
        data_ = nullptr;
        size_ = 0;
        fail(Errc::Io, std::string("mmap failed: ") + std::strerror(errno));
    }
}

MappedFile::~MappedFile() { unmap(); }

MappedFile::MappedFile(MappedFile&& other) noexcept
    : data_(std::exchange(other.data_, nullptr)), size_(std::exchange(other.size_, 0)) {}

MappedFile& MappedFile::operator=(MappedFile&& other) noexcept {
    if (this != &other) {
        unmap();
        data_ = std::exchange(other.data_, nullptr);
        size_ = std::exchange(other.size_, 0);
    }
    return *this;
}

void MappedFile::unmap() noexcept {
    if (data_ != nullptr) {
        ::munmap(data_, size_);
        data_ = nullptr;
        size_ = 0;
    }
}

std::chrono::nanoseconds inject_latency(std::chrono::nanoseconds latency) {
    using Clock = std::chrono::steady_clock;
    thread_local std::chrono::nanoseconds credit{0};
    const auto start = Clock::now();
    if (latency <= std::chrono::nanoseconds::zero()) {
        return {};
    }
    const auto target = latency - credit;
    if (target > std::chrono::nanoseconds::zero()) {
        std::this_thread::sleep_until(start + target);
    }
    const auto took = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start);
    credit = std::max(std::chrono::nanoseconds::zero(), took - target);
    return took;
}

} // namespace bbox
