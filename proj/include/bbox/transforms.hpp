#pragma once

#include "bbox/pipeline.hpp"

#include <functional>
#include <string>
#include <vector>

namespace bbox {

// Shipped transforms. Registry names in brackets.

// [decode] Encoded -> U8 via codec dispatch.
TransformPtr make_decode();
// [raw] Encoded -> U8 copy of the stored payload, shape (length, 1, 1).
TransformPtr make_raw();
// [normalize] (x - mean[c]) / std[c] as F32. One value broadcasts.
TransformPtr make_normalize(std::vector<float> mean, std::vector<float> std);
// [flip] Horizontal flip with probability p. Always consumes one draw.
TransformPtr make_flip(double p);
// [crop] Uniformly placed h x w window.
TransformPtr make_crop(std::uint32_t height, std::uint32_t width);
// [resize] Nearest-neighbour resize to h x w.
TransformPtr make_resize(std::uint32_t height, std::uint32_t width);
// [cast] U8 -> F32, values unchanged.
TransformPtr make_cast();

// Opaque transform wrapping an arbitrary callback, for user code that
// cannot be fused. `spec` defaults to identity.
using OpaqueFn = std::function<void(const ConstTensorView& in, TensorView& out, SplitMix64& rng)>;
using SpecFn = std::function<TensorSpec(const TensorSpec& in)>;
TransformPtr make_opaque(std::string name, OpaqueFn fn, SpecFn spec = {});
// [opaque_identity] Copies its input; exists to place an opaque stage in a
// pipeline from the CLI.
TransformPtr make_opaque_identity();

// Copies the used bytes of `in` into `out` and carries the shape over.
void copy_tensor(const ConstTensorView& in, TensorView& out);

} // namespace bbox
