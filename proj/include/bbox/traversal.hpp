#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace bbox {

enum class OrderKind { Sequential, Random, QuasiRandom };

OrderKind parse_order_kind(std::string_view name);
std::string_view order_kind_name(OrderKind kind);

// Buffer events of a quasi-random epoch, for trace checking.
struct QuasiEvent {
    enum class Kind { Admit, Emit, Leave };
    Kind kind;
    std::uint64_t value; // page for Admit/Leave, sample for Emit
};

// The full sample sequence of one epoch; a permutation of [0, num_samples).
//
// QuasiRandom draws samples only from a buffer of at most `batch_size`
// pages: pages are admitted in a seeded random permutation, the next sample
// is uniform over the unconsumed samples of buffered pages, and a page that
// runs dry is replaced immediately by the next one in the permutation.
// `page_map[i]` is the page of sample i; an empty map means one page.
std::vector<std::uint64_t> epoch_order(OrderKind kind, std::uint64_t seed, std::uint64_t epoch,
                                       std::uint64_t num_samples,
                                       std::span<const std::uint64_t> page_map,
                                       std::uint64_t batch_size,
                                       std::vector<QuasiEvent>* trace = nullptr);

std::vector<std::vector<std::uint64_t>> split_batches(std::span<const std::uint64_t> order,
                                                      std::uint64_t batch_size,
                                                      bool drop_last = false);

// Stateful per-epoch generator; (kind, seed, epoch) fixes the sequence.
class TraversalOrder {
public:
    TraversalOrder(OrderKind kind, std::uint64_t seed) : kind_(kind), seed_(seed) {}

    OrderKind kind() const noexcept { return kind_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t epoch() const noexcept { return epoch_; }

    std::vector<std::vector<std::uint64_t>> next_epoch(std::uint64_t num_samples,
                                                       std::span<const std::uint64_t> page_map,
                                                       std::uint64_t batch_size);
    std::vector<std::uint64_t> next_epoch_flat(std::uint64_t num_samples,
                                               std::span<const std::uint64_t> page_map,
                                               std::uint64_t batch_size);

private:
    OrderKind kind_;
    std::uint64_t seed_;
    std::uint64_t epoch_ = 0;
};

// Mean emission position of each sample over `epochs` consecutive epochs.
std::vector<double> uniformity_probe(OrderKind kind, std::uint64_t num_samples,
                                     std::uint64_t epochs,
                                     std::span<const std::uint64_t> page_map = {},
                                     std::uint64_t batch_size = 1, std::uint64_t seed = 0);

} // namespace bbox
