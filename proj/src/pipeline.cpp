#include "bbox/pipeline.hpp"

#include "bbox/endian.hpp"
#include "bbox/error.hpp"
#include "bbox/transforms.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>

namespace bbox {

namespace {

constexpr std::uint64_t kRegionAlignment = 64;

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) {
        s.remove_suffix(1);
    }
    return s;
}

void expect_args(std::string_view name, std::span<const double> args, std::size_t lo, std::size_t hi) {
    if (args.size() < lo || args.size() > hi) {
        fail(Errc::InvalidConfig, "transform '" + std::string(name) + "': wrong number of arguments");
    }
}

std::uint32_t as_dim(std::string_view name, double v) {
    if (!(v >= 1.0 && v <= 65535.0) || v != static_cast<double>(static_cast<std::uint32_t>(v))) {
        fail(Errc::InvalidConfig, "transform '" + std::string(name) + "': expects positive integer sizes");
    }
    return static_cast<std::uint32_t>(v);
}

void add_builtins(TransformRegistry& r) {
    r.add("decode", [](std::span<const double> a) {
        expect_args("decode", a, 0, 0);
        return make_decode();
    });
    r.add("raw", [](std::span<const double> a) {
        expect_args("raw", a, 0, 0);
        return make_raw();
    });
    r.add("normalize", [](std::span<const double> a) {
        if (a.empty() || a.size() % 2 != 0) {
            fail(Errc::InvalidConfig, "transform 'normalize': expects mean,std or m1..mk,s1..sk");
        }
        const std::size_t k = a.size() / 2;
        std::vector<float> mean(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(k));
        std::vector<float> stdev(a.begin() + static_cast<std::ptrdiff_t>(k), a.end());
        return make_normalize(std::move(mean), std::move(stdev));
    });
    r.add("flip", [](std::span<const double> a) {
        expect_args("flip", a, 0, 1);
        return make_flip(a.empty() ? 0.5 : a[0]);
    });
    r.add("crop", [](std::span<const double> a) {
        expect_args("crop", a, 2, 2);
        return make_crop(as_dim("crop", a[0]), as_dim("crop", a[1]));
    });
    r.add("resize", [](std::span<const double> a) {
        expect_args("resize", a, 2, 2);
        return make_resize(as_dim("resize", a[0]), as_dim("resize", a[1]));
    });
    r.add("cast", [](std::span<const double> a) {
        expect_args("cast", a, 0, 0);
        return make_cast();
    });
    r.add("opaque_identity", [](std::span<const double> a) {
        expect_args("opaque_identity", a, 0, 0);
        return make_opaque_identity();
    });
}

} // namespace

std::size_t elem_size(ElemType type) {
    return type == ElemType::F32 ? 4 : 1;
}

std::uint64_t TensorSpec::bytes() const {
    if (type == ElemType::Encoded) {
        return encoded_bytes;
    }
    return std::uint64_t{height} * width * channels * elem_size(type);
}

//------------------------------------------------------------------------------

TransformRegistry& TransformRegistry::global() {
    static TransformRegistry* registry = [] {
        auto* r = new TransformRegistry();
        add_builtins(*r);
        return r;
    }();
    return *registry;
}

void TransformRegistry::add(std::string name, Factory factory) {
    std::lock_guard lock(mutex_);
    factories_[std::move(name)] = std::move(factory);
}

TransformPtr TransformRegistry::make(std::string_view name, std::span<const double> args) const {
    Factory factory;
    {
        std::lock_guard lock(mutex_);
        auto it = factories_.find(name);
        if (it == factories_.end()) {
            fail(Errc::InvalidConfig, "unknown transform '" + std::string(name) + "'");
        }
        factory = it->second;
    }
    return factory(args);
}

bool TransformRegistry::contains(std::string_view name) const {
    std::lock_guard lock(mutex_);
    return factories_.find(name) != factories_.end();
}

std::vector<TransformPtr> parse_pipeline(std::string_view text, const TransformRegistry& registry) {
    std::vector<TransformPtr> out;
    if (trim(text).empty()) {
        fail(Errc::InvalidConfig, "empty pipeline");
    }
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t bar = std::min(text.find('|', start), text.size());
        const std::string_view item = trim(text.substr(start, bar - start));
        if (item.empty()) {
            fail(Errc::InvalidConfig, "empty transform in pipeline '" + std::string(text) + "'");
        }
        const std::size_t colon = item.find(':');
        const std::string_view name = trim(item.substr(0, colon));
        std::vector<double> args;
        if (colon != std::string_view::npos) {
            std::string_view rest = item.substr(colon + 1);
            std::size_t pos = 0;
            while (pos <= rest.size()) {
                const std::size_t comma = std::min(rest.find(',', pos), rest.size());
                const std::string_view tok = trim(rest.substr(pos, comma - pos));
                double v = 0;
                auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
                if (tok.empty() || ec != std::errc{} || p != tok.data() + tok.size()) {
                    fail(Errc::InvalidConfig, "bad argument '" + std::string(tok) + "' for transform '" +
                                                  std::string(name) + "'");
                }
                args.push_back(v);
                pos = comma + 1;
            }
        }
        out.push_back(registry.make(name, args));
        start = bar + 1;
    }
    return out;
}

//------------------------------------------------------------------------------

std::vector<Stage> group_stages(std::span<const Category> categories) {
    std::vector<Stage> stages;
    for (std::size_t i = 0; i < categories.size(); ++i) {
        if (stages.empty() || stages.back().category != categories[i]) {
            stages.push_back({categories[i], i, i + 1});
        } else {
            stages.back().last = i + 1;
        }
    }
    return stages;
}

PipelinePlan plan_pipeline(std::vector<TransformPtr> transforms, const TensorSpec& input,
                           std::size_t batch_size, std::size_t slot_count, bool staging) {
    if (transforms.empty()) {
        fail(Errc::InvalidConfig, "pipeline needs at least one transform");
    }
    if (batch_size == 0 || slot_count == 0) {
        fail(Errc::InvalidConfig, "batch_size and slot_count must be positive");
    }
    PipelinePlan plan;
    plan.batch_size = batch_size;
    plan.slot_count = slot_count;
    plan.specs.push_back(input);
    std::vector<Category> categories;
    for (const auto& t : transforms) {
        if (!t) {
            fail(Errc::InvalidConfig, "null transform");
        }
        plan.specs.push_back(t->output_spec(plan.specs.back()));
        categories.push_back(t->category());
    }
    plan.transforms = std::move(transforms);
    plan.stages = group_stages(categories);
    plan.inline_count = plan.stages.front().category == Category::Fusible ? plan.stages.front().last : 0;

    std::uint64_t offset = 0;
    if (staging || plan.inline_count == 0) {
        plan.staging_stride = align_up(std::max<std::uint64_t>(input.bytes(), 1), kRegionAlignment);
        plan.staging_offset = 0;
        offset = plan.staging_stride * batch_size;
    }
    for (std::size_t k = 0; k < plan.transforms.size(); ++k) {
        plan.stride.push_back(align_up(plan.specs[k + 1].bytes(), kRegionAlignment));
        plan.region_offset.push_back(offset);
        offset += plan.advance_allocation(k);
    }
    plan.slot_bytes = offset;
    plan.arena_bytes = offset * slot_count;
    return plan;
}

//------------------------------------------------------------------------------

PipelineExecutor::PipelineExecutor(PipelinePlan plan, MemoryTracker* tracker)
    : plan_(std::move(plan)),
      arena_(plan_.arena_bytes, tracker),
      shapes_(plan_.slot_count * (plan_.transforms.size() + 1) * plan_.batch_size),
      rng_state_(plan_.slot_count * plan_.batch_size, 0),
      failed_(plan_.slot_count * plan_.batch_size, 0),
      failures_(plan_.slot_count),
      failure_mutex_(new std::mutex[plan_.slot_count]) {
    for (auto& f : failures_) {
        f.reserve(plan_.batch_size);
    }
}

std::span<std::byte> PipelineExecutor::staging(std::size_t slot, std::size_t position) {
    if (plan_.staging_stride == 0) {
        return {};
    }
    return arena_.span().subspan(slot * plan_.slot_bytes + plan_.staging_offset +
                                     position * plan_.staging_stride,
                                 plan_.staging_stride);
}

TensorView PipelineExecutor::region(std::size_t slot, std::size_t transform, std::size_t position) {
    const TensorSpec& spec = plan_.specs[transform + 1];
    return {spec.type, {},
            arena_.span().subspan(slot * plan_.slot_bytes + plan_.region_offset[transform] +
                                      position * plan_.stride[transform],
                                  spec.bytes())};
}

Shape& PipelineExecutor::shape_at(std::size_t slot, std::size_t transform, std::size_t position) {
    return shapes_[(slot * (plan_.transforms.size() + 1) + transform) * plan_.batch_size + position];
}

const Shape& PipelineExecutor::shape_at(std::size_t slot, std::size_t transform,
                                        std::size_t position) const {
    return shapes_[(slot * (plan_.transforms.size() + 1) + transform) * plan_.batch_size + position];
}

ConstTensorView PipelineExecutor::input_of(std::size_t slot, std::size_t transform,
                                           std::size_t position) const {
    auto* self = const_cast<PipelineExecutor*>(this);
    if (transform == 0) {
        return {plan_.specs[0].type, shape_at(slot, 0, position), self->staging(slot, position)};
    }
    TensorView v = self->region(slot, transform - 1, position);
    v.shape = shape_at(slot, transform, position);
    return v.as_const();
}

void PipelineExecutor::run_range(std::size_t slot, std::size_t position, std::size_t first,
                                 std::size_t last, SplitMix64& rng) {
    for (std::size_t k = first; k < last; ++k) {
        const ConstTensorView in = input_of(slot, k, position);
        TensorView out = region(slot, k, position);
        plan_.transforms[k]->apply(in, out, rng);
        shape_at(slot, k + 1, position) = out.shape;
    }
}

void PipelineExecutor::begin_batch(std::size_t slot) {
    std::lock_guard lock(failure_mutex_[slot]);
    failures_[slot].clear();
    std::fill_n(failed_.begin() + static_cast<std::ptrdiff_t>(slot * plan_.batch_size), plan_.batch_size, 0);
}

void PipelineExecutor::execute_sample(std::size_t slot, std::size_t position, const ConstTensorView& input,
                                      std::uint64_t rng_seed) noexcept {
    instrument::PipelineScope scope;
    const std::size_t idx = slot * plan_.batch_size + position;
    failed_[idx] = 0;
    SplitMix64 rng(rng_seed);
    try {
        if (input.type != plan_.specs[0].type) {
            fail(Errc::SpecMismatch, "input type differs from the planned input spec");
        }
        if (plan_.inline_count == 0) {
            std::span<std::byte> stage = staging(slot, position);
            const std::uint64_t n = input.used_bytes();
            if (n > stage.size()) {
                fail(Errc::SpecMismatch, "input exceeds its planned buffer");
            }
            if (n != 0 && input.data.data() != stage.data()) {
                std::memmove(stage.data(), input.data.data(), n);
            }
            shape_at(slot, 0, position) = input.shape;
        } else {
            TensorView out = region(slot, 0, position);
            plan_.transforms[0]->apply(input, out, rng);
            shape_at(slot, 1, position) = out.shape;
            run_range(slot, position, 1, plan_.inline_count, rng);
        }
    } catch (const std::exception& e) {
        fail_sample(slot, position, e.what());
    }
    rng_state_[idx] = rng.state();
}

void PipelineExecutor::fail_sample(std::size_t slot, std::size_t position, std::string message) noexcept {
    try {
        std::lock_guard lock(failure_mutex_[slot]);
        failed_[slot * plan_.batch_size + position] = 1;
        failures_[slot].push_back({position, std::move(message)});
    } catch (...) {
        failed_[slot * plan_.batch_size + position] = 1;
    }
}

void PipelineExecutor::execute_batch_opaque(std::size_t slot, std::size_t count) {
    instrument::PipelineScope scope;
    for (const Stage& stage : plan_.stages) {
        if (stage.first < plan_.inline_count) {
            continue;
        }
        for (std::size_t pos = 0; pos < count; ++pos) {
            const std::size_t idx = slot * plan_.batch_size + pos;
            if (failed_[idx] != 0) {
                continue;
            }
            SplitMix64 rng;
            rng.set_state(rng_state_[idx]);
            try {
                run_range(slot, pos, stage.first, stage.last, rng);
            } catch (const std::exception& e) {
                fail_sample(slot, pos, e.what());
            }
            rng_state_[idx] = rng.state();
        }
    }
}

std::optional<SampleFailure> PipelineExecutor::first_failure(std::size_t slot) const {
    std::lock_guard lock(failure_mutex_[slot]);
    const auto& list = failures_[slot];
    if (list.empty()) {
        return std::nullopt;
    }
    return *std::min_element(list.begin(), list.end(), [](const auto& a, const auto& b) {
        return a.position < b.position;
    });
}

ConstTensorView PipelineExecutor::output(std::size_t slot, std::size_t position) const {
    return input_of(slot, plan_.transforms.size(), position);
}

std::span<const std::byte> PipelineExecutor::output_region(std::size_t slot) const {
    const std::size_t last = plan_.transforms.size() - 1;
    return arena_.span().subspan(slot * plan_.slot_bytes + plan_.region_offset[last],
                                 plan_.advance_allocation(last));
}

std::span<const Shape> PipelineExecutor::output_shapes(std::size_t slot) const {
    return {&shape_at(slot, plan_.transforms.size(), 0), plan_.batch_size};
}

} // namespace bbox
