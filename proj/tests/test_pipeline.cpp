#include "bbox/error.hpp"
#include "bbox/pipeline.hpp"
#include "bbox/transforms.hpp"
#include "support/alloc_counter.hpp"
#include "support/expect.hpp"
#include "support/oracles.hpp"
#include "support/pipeline_harness.hpp"

#include <doctest.h>

#include <atomic>
#include <cstring>

using namespace bbox;
using namespace bbox::testing;

namespace {

ConstTensorView u8_view(const std::vector<std::uint8_t>& px, std::uint32_t h, std::uint32_t w, std::uint32_t c) {
    return {ElemType::U8, {h, w, c, CodecId::Raw, 0},
            std::as_bytes(std::span<const std::uint8_t>(px))};
}

std::vector<float> floats_of(const ConstTensorView& v) {
    std::vector<float> out(v.shape.elements());
    std::memcpy(out.data(), v.data.data(), out.size() * sizeof(float));
    return out;
}

std::vector<std::uint8_t> u8_of(const ConstTensorView& v) {
    std::vector<std::uint8_t> out(v.shape.elements());
    std::memcpy(out.data(), v.data.data(), out.size());
    return out;
}

TensorSpec u8_spec(std::uint32_t h, std::uint32_t w, std::uint32_t c) {
    return {ElemType::U8, h, w, c, 0};
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("stage grouping") {
    using C = Category;
    const std::vector<C> ffof{C::Fusible, C::Fusible, C::Opaque, C::Fusible};
    const auto stages = group_stages(ffof);
    REQUIRE(stages.size() == 3);
    CHECK(stages[0].first == 0);
    CHECK(stages[0].last == 2);
    CHECK(stages[1].category == C::Opaque);
    CHECK(stages[2].first == 3);
    CHECK(group_stages(std::vector<C>{C::Fusible}).size() == 1);

    SplitMix64 rng(2);
    for (int t = 0; t < 2000; ++t) {
        std::vector<C> cats(rng.below(12));
        for (auto& c : cats) {
            c = rng.below(2) ? C::Opaque : C::Fusible;
        }
        const auto got = group_stages(cats);
        const auto want = run_lengths(cats);
        REQUIRE(got.size() == want.size());
        std::size_t at = 0;
        for (std::size_t k = 0; k < got.size(); ++k) {
            REQUIRE(got[k].category == want[k].first);
            REQUIRE(got[k].first == at);
            REQUIRE(got[k].last - got[k].first == want[k].second);
            at = got[k].last;
        }
    }
}

TEST_CASE("plan places only the leading fusible stage inline") {
    const auto plan = plan_pipeline(parse_pipeline("decode|flip:0.5|opaque_identity|crop:16,16"),
                                    harness_input_spec(), 4, 3);
    CHECK(plan.stages.size() == 3);
    CHECK(plan.inline_count == 2);
    const auto plan2 = plan_pipeline(parse_pipeline("opaque_identity|decode"), harness_input_spec(), 4, 3);
    CHECK(plan2.inline_count == 0);
    CHECK(plan2.staging_stride >= harness_input_spec().bytes());
}

TEST_CASE("normalize with mean 0 and std 1 is the identity") {
    PipelineExecutor exec(plan_pipeline({make_normalize({0}, {1})}, u8_spec(4, 4, 1), 1, 1));
    std::vector<std::uint8_t> px(16);
    for (std::size_t i = 0; i < px.size(); ++i) {
        px[i] = static_cast<std::uint8_t>(i * 17);
    }
    exec.begin_batch(0);
    exec.execute_sample(0, 0, u8_view(px, 4, 4, 1), 0);
    const auto out = floats_of(exec.output(0, 0));
    for (std::size_t i = 0; i < px.size(); ++i) {
        CHECK(out[i] == static_cast<float>(px[i]));
    }
}

TEST_CASE("flip on a 1x2 tensor") {
    const std::vector<std::uint8_t> px{7, 9};
    PipelineExecutor always(plan_pipeline({make_flip(1.0)}, u8_spec(1, 2, 1), 1, 1));
    always.begin_batch(0);
    always.execute_sample(0, 0, u8_view(px, 1, 2, 1), 3);
    CHECK(u8_of(always.output(0, 0)) == std::vector<std::uint8_t>{9, 7});

    PipelineExecutor never(plan_pipeline({make_flip(0.0)}, u8_spec(1, 2, 1), 1, 1));
    never.begin_batch(0);
    never.execute_sample(0, 0, u8_view(px, 1, 2, 1), 3);
    CHECK(u8_of(never.output(0, 0)) == px);
}

TEST_CASE("fused pipelines match the unfused reference") {
    std::uint64_t seed = 100;
    for (const auto& pc : pipeline_cases()) {
        CAPTURE(pc.text);
        CHECK(check_pipeline_case(pc, 1000, seed++) == "");
    }
}

TEST_CASE("batch size and slot count do not change results") {
    const auto cases = pipeline_cases();
    for (std::size_t b : {1u, 3u, 16u}) {
        for (std::size_t s : {1u, 2u, 5u}) {
            CHECK(check_pipeline_case(cases[9], 64, 7, b, s) == "");
        }
    }
}

TEST_CASE("opaque callback runs once per sample") {
    std::atomic<int> calls{0};
    auto counting = make_opaque("count", [&](const ConstTensorView& in, TensorView& out, SplitMix64&) {
        ++calls;
        copy_tensor(in, out);
    });
    PipelineExecutor exec(plan_pipeline({make_cast(), counting, make_flip(0.5)}, u8_spec(2, 2, 1), 8, 2));
    std::vector<std::uint8_t> px{1, 2, 3, 4};
    for (int round = 0; round < 3; ++round) {
        const std::size_t slot = static_cast<std::size_t>(round) % 2;
        exec.begin_batch(slot);
        for (std::size_t pos = 0; pos < 8; ++pos) {
            exec.execute_sample(slot, pos, u8_view(px, 2, 2, 1), pos);
        }
        CHECK(calls == round * 8);
        exec.execute_batch_opaque(slot, 8);
        CHECK(calls == (round + 1) * 8);
    }
}

TEST_CASE("an opaque failure marks only its sample") {
    auto fussy = make_opaque("fussy", [](const ConstTensorView& in, TensorView& out, SplitMix64&) {
        if (in.data[0] == std::byte{3}) {
            throw std::runtime_error("cannot handle three");
        }
        copy_tensor(in, out);
    });
    PipelineExecutor exec(plan_pipeline({make_flip(0.0), fussy, make_cast()}, u8_spec(1, 1, 1), 6, 1));
    std::vector<std::vector<std::uint8_t>> px;
    for (std::uint8_t v = 0; v < 6; ++v) {
        px.push_back({v});
    }
    exec.begin_batch(0);
    for (std::size_t pos = 0; pos < 6; ++pos) {
        exec.execute_sample(0, pos, u8_view(px[pos], 1, 1, 1), 0);
    }
    exec.execute_batch_opaque(0, 6);
    const auto f = exec.first_failure(0);
    REQUIRE(f.has_value());
    CHECK(f->position == 3);
    CHECK(f->message.find("three") != std::string::npos);
    for (std::size_t pos : {0u, 1u, 2u, 4u, 5u}) {
        CHECK(floats_of(exec.output(0, pos))[0] == static_cast<float>(pos));
    }
    exec.begin_batch(0);
    CHECK_FALSE(exec.first_failure(0).has_value());
}

TEST_CASE("arena layout") {
    // 24x24x3 u8 input; decode output 1728 B, crop 16x16x3 u8 768 B,
    // normalize 16x16x3 f32 3072 B. All multiples of 64 already.
    TensorSpec in{ElemType::Encoded, 24, 24, 3, 1000};
    const auto plan = plan_pipeline(parse_pipeline("decode|crop:16,16|normalize:0,1"), in, 4, 3);
    CHECK(plan.stride == std::vector<std::uint64_t>{1728, 768, 3072});
    CHECK(plan.region_offset == std::vector<std::uint64_t>{0, 1728 * 4, (1728 + 768) * 4});
    CHECK(plan.slot_bytes == (1728 + 768 + 3072) * 4);
    CHECK(plan.arena_bytes == 3 * (1728 + 768 + 3072) * 4);
    CHECK(plan.advance_allocation(2) == 3072 * 4);

    // Staging adds one aligned input buffer per position: 1000 -> 1024.
    const auto staged = plan_pipeline(parse_pipeline("decode|crop:16,16|normalize:0,1"), in, 4, 3, true);
    CHECK(staged.staging_stride == 1024);
    CHECK(staged.region_offset[0] == 1024 * 4);
    CHECK(staged.arena_bytes == 3 * (1024 + 1728 + 768 + 3072) * 4);

    // Odd sizes round up to 64.
    const auto odd = plan_pipeline({make_cast()}, u8_spec(3, 5, 1), 2, 2);
    CHECK(odd.stride[0] == 64);
    CHECK(odd.arena_bytes == 2 * 2 * 64);

    MemoryTracker tracker;
    {
        PipelineExecutor exec(plan, &tracker);
        CHECK(tracker.current_bytes() == plan.arena_bytes);
    }
    CHECK(tracker.current_bytes() == 0);
}

TEST_CASE("spec mismatches are rejected at planning time") {
    TensorSpec enc{ElemType::Encoded, 24, 24, 3, 1000};
    CHECK(code_of([&] { plan_pipeline(parse_pipeline("normalize:0,1"), enc, 1, 1); }) == Errc::SpecMismatch);
    CHECK(code_of([&] { plan_pipeline(parse_pipeline("decode|decode"), enc, 1, 1); }) == Errc::SpecMismatch);
    CHECK(code_of([&] { plan_pipeline(parse_pipeline("decode|crop:30,2"), enc, 1, 1); }) == Errc::SpecMismatch);
    CHECK(code_of([&] { plan_pipeline(parse_pipeline("decode|normalize:1,2,3,4"), enc, 1, 1); }) ==
          Errc::SpecMismatch);
    CHECK(code_of([&] { plan_pipeline({}, enc, 1, 1); }) == Errc::InvalidConfig);
    CHECK(code_of([&] { plan_pipeline(parse_pipeline("decode"), enc, 0, 1); }) == Errc::InvalidConfig);
}

TEST_CASE("runtime input mismatch fails the sample, not the batch") {
    PipelineExecutor exec(plan_pipeline(parse_pipeline("crop:4,4"), u8_spec(8, 8, 1), 2, 1));
    std::vector<std::uint8_t> small(4), big(64);
    exec.begin_batch(0);
    exec.execute_sample(0, 0, u8_view(big, 8, 8, 1), 0);
    exec.execute_sample(0, 1, u8_view(small, 2, 2, 1), 0);
    const auto f = exec.first_failure(0);
    REQUIRE(f.has_value());
    CHECK(f->position == 1);
}

TEST_CASE("pipeline parsing") {
    CHECK(parse_pipeline("decode").size() == 1);
    CHECK(parse_pipeline(" decode | crop:32,32 | flip:0.5 ").size() == 3);
    for (const char* bad : {"", "decode||flip", "nosuch", "crop:1", "crop:a,b", "flip:2", "crop:0,4",
                            "normalize:1", "normalize:1,0", "decode:1"}) {
        CAPTURE(bad);
        CHECK(code_of([&] { parse_pipeline(bad); }) == Errc::InvalidConfig);
    }
    TransformRegistry reg;
    reg.add("twice", [](std::span<const double>) { return make_cast(); });
    CHECK(reg.contains("twice"));
    CHECK_FALSE(reg.contains("decode"));
    CHECK(parse_pipeline("twice", reg).front()->name() == "cast");
}

TEST_CASE("fused execution allocates nothing") {
    PipelineExecutor exec(plan_pipeline(parse_pipeline("decode|flip:0.5|crop:16,16|normalize:127.5,64"),
                                        harness_input_spec(), 8, 2));
    SplitMix64 rng(1);
    std::vector<ImageBlob> blobs;
    for (int i = 0; i < 64; ++i) {
        blobs.push_back(harness_image(rng));
    }
    const auto before = pipeline_allocations();
    for (std::size_t b = 0; b < 8; ++b) {
        exec.begin_batch(b % 2);
        for (std::size_t pos = 0; pos < 8; ++pos) {
            exec.execute_sample(b % 2, pos, encoded_view(blobs[b * 8 + pos]), pos);
        }
        exec.execute_batch_opaque(b % 2, 8);
        REQUIRE_FALSE(exec.first_failure(b % 2).has_value());
    }
    CHECK(pipeline_allocations() == before);
}

} // TEST_SUITE
