#include "bbox/traversal.hpp"

#include "bbox/error.hpp"
#include "bbox/random.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace bbox {

OrderKind parse_order_kind(std::string_view name) {
    if (name == "sequential") return OrderKind::Sequential;
    if (name == "random") return OrderKind::Random;
    if (name == "quasi-random" || name == "quasi_random" || name == "quasi") {
        return OrderKind::QuasiRandom;
    }
    fail(Errc::InvalidConfig, "unknown order '" + std::string(name) + "'");
}

std::string_view order_kind_name(OrderKind kind) {
    switch (kind) {
    case OrderKind::Sequential: return "sequential";
    case OrderKind::Random: return "random";
    case OrderKind::QuasiRandom: return "quasi-random";
    }
    return "unknown";
}

namespace {

constexpr std::uint64_t kRandomStream = 0x72616e646f6dULL;
constexpr std::uint64_t kQuasiStream = 0x7175617369ULL;

std::vector<std::uint64_t> shuffled(std::uint64_t n, SplitMix64& rng) {
    std::vector<std::uint64_t> v(n);
    std::iota(v.begin(), v.end(), std::uint64_t{0});
    for (std::uint64_t i = n; i > 1; --i) {
        std::swap(v[i - 1], v[rng.below(i)]);
    }
    return v;
}

std::vector<std::uint64_t> quasi_random(std::uint64_t seed, std::uint64_t epoch,
                                        std::uint64_t num_samples,
                                        std::span<const std::uint64_t> page_map,
                                        std::uint64_t buffer_pages,
                                        std::vector<QuasiEvent>* trace) {
    // Group samples by page; pages are identified by their rank in sorted
    // page-id order so arbitrary (virtual) page ids work.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> keyed(num_samples);
    for (std::uint64_t i = 0; i < num_samples; ++i) {
        keyed[i] = {page_map.empty() ? 0 : page_map[i], i};
    }
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::uint64_t> page_ids;
    std::vector<std::size_t> page_begin;
    for (std::size_t k = 0; k < keyed.size(); ++k) {
        if (k == 0 || keyed[k].first != keyed[k - 1].first) {
            page_ids.push_back(keyed[k].first);
            page_begin.push_back(k);
        }
    }
    page_begin.push_back(keyed.size());

    SplitMix64 rng(mix_keys({seed, epoch, kQuasiStream}));
    const auto permutation = shuffled(page_ids.size(), rng);

    std::vector<std::uint64_t> order;
    order.reserve(num_samples);
    std::vector<std::uint64_t> pool;        // unconsumed samples of buffered pages
    std::vector<std::size_t> pool_page;     // page rank of each pool entry
    std::vector<std::size_t> left(page_ids.size(), 0);
    std::size_t next_page = 0;

    const auto admit = [&] {
        const std::size_t rank = permutation[next_page++];
        for (std::size_t k = page_begin[rank]; k < page_begin[rank + 1]; ++k) {
            pool.push_back(keyed[k].second);
            pool_page.push_back(rank);
        }
        left[rank] = page_begin[rank + 1] - page_begin[rank];
        if (trace != nullptr) {
            trace->push_back({QuasiEvent::Kind::Admit, page_ids[rank]});
        }
    };

    while (next_page < permutation.size() && next_page < buffer_pages) {
        admit();
    }
    while (!pool.empty()) {
        const std::size_t j = rng.below(pool.size());
        const std::uint64_t sample = pool[j];
        const std::size_t rank = pool_page[j];
        pool[j] = pool.back();
        pool_page[j] = pool_page.back();
        pool.pop_back();
        pool_page.pop_back();
        order.push_back(sample);
        if (trace != nullptr) {
            trace->push_back({QuasiEvent::Kind::Emit, sample});
        }
        if (--left[rank] == 0) {
            if (trace != nullptr) {
                trace->push_back({QuasiEvent::Kind::Leave, page_ids[rank]});
            }
            if (next_page < permutation.size()) {
                admit();
            }
        }
    }
    return order;
}

} // namespace

std::vector<std::uint64_t> epoch_order(OrderKind kind, std::uint64_t seed, std::uint64_t epoch,
                                       std::uint64_t num_samples,
                                       std::span<const std::uint64_t> page_map,
                                       std::uint64_t batch_size,
                                       std::vector<QuasiEvent>* trace) {
    if (batch_size == 0) {
        fail(Errc::InvalidConfig, "batch size must be at least 1");
    }
    if (!page_map.empty() && page_map.size() != num_samples) {
        fail(Errc::InvalidConfig, "page map must cover every sample");
    }
    switch (kind) {
    case OrderKind::Sequential: {
        std::vector<std::uint64_t> v(num_samples);
        std::iota(v.begin(), v.end(), std::uint64_t{0});
        return v;
    }
    case OrderKind::Random: {
        SplitMix64 rng(mix_keys({seed, epoch, kRandomStream}));
        return shuffled(num_samples, rng);
    }
    case OrderKind::QuasiRandom:
        return quasi_random(seed, epoch, num_samples, page_map, batch_size, trace);
    }
    fail(Errc::InvalidConfig, "unknown order kind");
}

std::vector<std::vector<std::uint64_t>> split_batches(std::span<const std::uint64_t> order,
                                                      std::uint64_t batch_size, bool drop_last) {
    if (batch_size == 0) {
        fail(Errc::InvalidConfig, "batch size must be at least 1");
    }
    std::vector<std::vector<std::uint64_t>> batches;
    for (std::size_t b = 0; b < order.size(); b += batch_size) {
        const std::size_t end = std::min<std::size_t>(order.size(), b + batch_size);
        if (drop_last && end - b < batch_size) {
            break;
        }
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

std::vector<std::vector<std::uint64_t>> TraversalOrder::next_epoch(
    std::uint64_t num_samples, std::span<const std::uint64_t> page_map, std::uint64_t batch_size) {
    const auto flat = next_epoch_flat(num_samples, page_map, batch_size);
    return split_batches(flat, batch_size);
}

std::vector<std::uint64_t> TraversalOrder::next_epoch_flat(std::uint64_t num_samples,
                                                           std::span<const std::uint64_t> page_map,
                                                           std::uint64_t batch_size) {
    auto order = epoch_order(kind_, seed_, epoch_, num_samples, page_map, batch_size);
    ++epoch_;
    return order;
}

std::vector<double> uniformity_probe(OrderKind kind, std::uint64_t num_samples,
                                     std::uint64_t epochs,
                                     std::span<const std::uint64_t> page_map,
                                     std::uint64_t batch_size, std::uint64_t seed) {
    if (epochs == 0) {
        fail(Errc::InvalidConfig, "need at least one epoch");
    }
    std::vector<double> sum(num_samples, 0.0);
    for (std::uint64_t e = 0; e < epochs; ++e) {
        const auto order = epoch_order(kind, seed, e, num_samples, page_map, batch_size);
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            sum[order[pos]] += static_cast<double>(pos);
        }
    }
    for (auto& s : sum) {
        s /= static_cast<double>(epochs);
    }
    return sum;
}

} // namespace bbox
