#pragma once

#include "bbox/format.hpp"
#include "bbox/memory.hpp"
#include "bbox/random.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bbox {

//------------------------------------------------------------------------------
// Tensors

enum class ElemType : std::uint8_t { U8, F32, Encoded };

std::size_t elem_size(ElemType type);

// Upper bound on what a transform produces. For Encoded tensors the dims are
// the image maxima and `encoded_bytes` bounds the payload length.
struct TensorSpec {
    ElemType type = ElemType::U8;
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::uint32_t channels = 0;
    std::uint64_t encoded_bytes = 0;

    std::uint64_t bytes() const;
    bool operator==(const TensorSpec&) const = default;
};

// Actual per-sample shape (may be smaller than the spec).
struct Shape {
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::uint32_t channels = 0;
    CodecId codec = CodecId::Raw; // Encoded only
    std::uint64_t length = 0;     // Encoded only: payload bytes

    std::uint64_t elements() const noexcept { return std::uint64_t{height} * width * channels; }
    bool operator==(const Shape&) const = default;
};

struct ConstTensorView {
    ElemType type = ElemType::U8;
    Shape shape;
    std::span<const std::byte> data;

    std::uint64_t used_bytes() const {
        return type == ElemType::Encoded ? shape.length : shape.elements() * elem_size(type);
    }
};

struct TensorView {
    ElemType type = ElemType::U8;
    Shape shape;
    std::span<std::byte> data; // capacity per the output spec

    ConstTensorView as_const() const { return {type, shape, data}; }
};

//------------------------------------------------------------------------------
// Transforms

enum class Category { Fusible, Opaque };

// A per-sample processing step. Fusible transforms write only into `out`,
// allocate nothing and take no locks; they run inline in loader workers.
// Opaque transforms run on the consumer thread, once per sample.
class Transform {
public:
    virtual ~Transform() = default;
    virtual std::string_view name() const = 0;
    virtual Category category() const { return Category::Fusible; }
    // Pure. Throws SpecMismatch when the input is unsupported.
    virtual TensorSpec output_spec(const TensorSpec& in) const = 0;
    // Writes the result into out.data and sets out.shape.
    virtual void apply(const ConstTensorView& in, TensorView& out, SplitMix64& rng) const = 0;
};

using TransformPtr = std::shared_ptr<const Transform>;

class TransformRegistry {
public:
    using Factory = std::function<TransformPtr(std::span<const double> args)>;

    // Registry pre-populated with the shipped transforms.
    static TransformRegistry& global();

    void add(std::string name, Factory factory);
    TransformPtr make(std::string_view name, std::span<const double> args) const;
    bool contains(std::string_view name) const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, Factory, std::less<>> factories_;
};

// Parses `name:arg,arg|name|...`, e.g. `decode|crop:32,32|flip:0.5`.
std::vector<TransformPtr> parse_pipeline(std::string_view text,
                                         const TransformRegistry& registry = TransformRegistry::global());

//------------------------------------------------------------------------------
// Planning

struct Stage {
    Category category = Category::Fusible;
    std::size_t first = 0; // transform index range [first, last)
    std::size_t last = 0;
};

// Maximal runs of equal category.
std::vector<Stage> group_stages(std::span<const Category> categories);

struct PipelinePlan {
    std::vector<TransformPtr> transforms;
    std::vector<TensorSpec> specs; // specs[0] input, specs[k + 1] output of transform k
    std::vector<Stage> stages;
    std::size_t batch_size = 0;
    std::size_t slot_count = 0;
    // Transforms [0, inline_count) run in workers; the rest at batch level.
    std::size_t inline_count = 0;

    std::vector<std::uint64_t> stride;        // per transform: aligned bytes per sample
    std::vector<std::uint64_t> region_offset; // per transform: offset within a slot
    std::uint64_t staging_stride = 0;         // 0 when no staging region
    std::uint64_t staging_offset = 0;
    std::uint64_t slot_bytes = 0;
    std::uint64_t arena_bytes = 0;

    std::uint64_t advance_allocation(std::size_t transform) const {
        return stride[transform] * batch_size;
    }
    const TensorSpec& output_spec() const { return specs.back(); }
};

// Propagates specs, groups stages and lays out one arena holding every
// intermediate of every slot. `staging` adds a per-position input buffer
// (always added when the first transform is opaque).
PipelinePlan plan_pipeline(std::vector<TransformPtr> transforms, const TensorSpec& input,
                           std::size_t batch_size, std::size_t slot_count, bool staging = false);

//------------------------------------------------------------------------------
// Execution

struct SampleFailure {
    std::size_t position = 0;
    std::string message;
};

// Owns the arena of a plan and runs it. Workers call execute_sample() at
// disjoint positions of a slot; the consumer then calls
// execute_batch_opaque() for the deferred stages.
class PipelineExecutor {
public:
    PipelineExecutor(PipelinePlan plan, MemoryTracker* tracker = nullptr);

    const PipelinePlan& plan() const noexcept { return plan_; }

    // Per-position input buffer; empty when the plan has no staging.
    std::span<std::byte> staging(std::size_t slot, std::size_t position);

    void begin_batch(std::size_t slot);
    // Never throws: failures are recorded against the position.
    void execute_sample(std::size_t slot, std::size_t position, const ConstTensorView& input,
                        std::uint64_t rng_seed) noexcept;
    void fail_sample(std::size_t slot, std::size_t position, std::string message) noexcept;
    // Runs every deferred stage for positions [0, count) of a slot.
    void execute_batch_opaque(std::size_t slot, std::size_t count);
    std::optional<SampleFailure> first_failure(std::size_t slot) const;

    ConstTensorView output(std::size_t slot, std::size_t position) const;
    std::span<const std::byte> output_region(std::size_t slot) const;
    std::span<const Shape> output_shapes(std::size_t slot) const;

private:
    TensorView region(std::size_t slot, std::size_t transform, std::size_t position);
    ConstTensorView input_of(std::size_t slot, std::size_t transform, std::size_t position) const;
    Shape& shape_at(std::size_t slot, std::size_t transform, std::size_t position);
    const Shape& shape_at(std::size_t slot, std::size_t transform, std::size_t position) const;
    void run_range(std::size_t slot, std::size_t position, std::size_t first, std::size_t last,
                   SplitMix64& rng);

    PipelinePlan plan_;
    TrackedBuffer arena_;
    // [slot][transform + 1][position]; index 0 holds the staged input shape.
    std::vector<Shape> shapes_;
    std::vector<std::uint64_t> rng_state_;   // [slot][position]
    std::vector<std::uint8_t> failed_;       // [slot][position]
    std::vector<std::vector<SampleFailure>> failures_; // per slot
    std::unique_ptr<std::mutex[]> failure_mutex_;
};

} // namespace bbox
