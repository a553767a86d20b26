#include "bbox/transforms.hpp"

#include "bbox/codecs.hpp"
#include "bbox/error.hpp"

#include <algorithm>
#include <cstring>

namespace bbox {

namespace {

const float* as_f32(std::span<const std::byte> data) {
    return reinterpret_cast<const float*>(data.data());
}
float* as_f32(std::span<std::byte> data) {
    return reinterpret_cast<float*>(data.data());
}
const std::uint8_t* as_u8(std::span<const std::byte> data) {
    return reinterpret_cast<const std::uint8_t*>(data.data());
}
std::uint8_t* as_u8(std::span<std::byte> data) {
    return reinterpret_cast<std::uint8_t*>(data.data());
}

void require_pixels(const TensorSpec& in, std::string_view who) {
    if (in.type == ElemType::Encoded) {
        fail(Errc::SpecMismatch, std::string(who) + ": expects decoded pixels, got an encoded image");
    }
}

void require_fits(const ConstTensorView& in, const TensorView& out, std::string_view who) {
    if (out.shape.elements() * elem_size(out.type) > out.data.size()) {
        fail(Errc::SpecMismatch, std::string(who) + ": output exceeds its planned buffer");
    }
    (void)in;
}

class Decode final : public Transform {
public:
    std::string_view name() const override { return "decode"; }
    TensorSpec output_spec(const TensorSpec& in) const override {
        if (in.type != ElemType::Encoded) {
            fail(Errc::SpecMismatch, "decode: expects an encoded image");
        }
        return {ElemType::U8, in.height, in.width, in.channels, 0};
    }
    void apply(const ConstTensorView& in, TensorView& out, SplitMix64&) const override {
        EncodedImage image{static_cast<std::uint16_t>(in.shape.height),
                           static_cast<std::uint16_t>(in.shape.width),
                           static_cast<std::uint8_t>(in.shape.channels), in.shape.codec,
                           in.data.first(in.shape.length)};
        out.shape = {in.shape.height, in.shape.width, in.shape.channels, CodecId::Raw, 0};
        require_fits(in, out, name());
        decode_image(image, {as_u8(out.data), image.decoded_size()});
    }
};

class Raw final : public Transform {
public:
    std::string_view name() const override { return "raw"; }
    TensorSpec output_spec(const TensorSpec& in) const override {
        if (in.type != ElemType::Encoded) {
            fail(Errc::SpecMismatch, "raw: expects an encoded image");
        }
        return {ElemType::U8, static_cast<std::uint32_t>(in.encoded_bytes), 1, 1, 0};
    }
    void apply(const ConstTensorView& in, TensorView& out, SplitMix64&) const override {
        out.shape = {static_cast<std::uint32_t>(in.shape.length), 1, 1, CodecId::Raw, 0};
        require_fits(in, out, name());
        if (in.shape.length != 0) {
            std::memcpy(out.data.data(), in.data.data(), in.shape.length);
        }
    }
};

class Normalize final : public Transform {
public:
    Normalize(std::vector<float> mean, std::vector<float> std)
        : mean_(std::move(mean)), std_(std::move(std)) {
        if (mean_.empty() || mean_.size() != std_.size()) {
            fail(Errc::InvalidConfig, "normalize: needs matching mean and std lists");
        }
        for (float s : std_) {
            if (!(s != 0.0f)) {
                fail(Errc::InvalidConfig, "normalize: std must be nonzero");
            }
        }
    }
    std::string_view name() const override { return "normalize"; }
    TensorSpec output_spec(const TensorSpec& in) const override {
        require_pixels(in, name());
        if (mean_.size() != 1 && mean_.size() != in.channels) {
            fail(Errc::SpecMismatch, "normalize: channel count mismatch");
        }
        return {ElemType::F32, in.height, in.width, in.channels, 0};
    }
    void apply(const ConstTensorView& in, TensorView& out, SplitMix64&) const override {
        out.shape = in.shape;
        require_fits(in, out, name());
        const std::uint64_t n = in.shape.elements();
        const std::uint32_t c = in.shape.channels;
        if (mean_.size() != 1 && mean_.size() != c) {
            fail(Errc::SpecMismatch, "normalize: channel count mismatch");
        }
        float* dst = as_f32(out.data);
        if (in.type == ElemType::U8) {
            run(as_u8(in.data), dst, n, c);
        } else {
            run(as_f32(in.data), dst, n, c);
        }
    }

private:
    template <typename T>
    void run(const T* src, float* dst, std::uint64_t n, std::uint32_t c) const {
        if (mean_.size() == 1) {
            const float m = mean_[0];
            const float sd = std_[0];
            for (std::uint64_t i = 0; i < n; ++i) {
                dst[i] = (static_cast<float>(src[i]) - m) / sd;
            }
            return;
        }
        for (std::uint64_t i = 0; i < n; i += c) {
            for (std::uint32_t k = 0; k < c; ++k) {
                dst[i + k] = (static_cast<float>(src[i + k]) - mean_[k]) / std_[k];
            }
        }
    }

    std::vector<float> mean_;
    std::vector<float> std_;
};

class Flip final : public Transform {
public:
    explicit Flip(double p) : p_(p) {
        if (!(p >= 0.0 && p <= 1.0)) {
            fail(Errc::InvalidConfig, "flip: probability must lie in [0, 1]");
        }
    }
    std::string_view name() const override { return "flip"; }
    TensorSpec output_spec(const TensorSpec& in) const override {
        require_pixels(in, name());
        return in;
    }
    void apply(const ConstTensorView& in, TensorView& out, SplitMix64& rng) const override {
        const bool flip = rng.unit() < p_;
        out.shape = in.shape;
        require_fits(in, out, name());
        const std::size_t es = elem_size(in.type);
        const std::size_t px = std::size_t{in.shape.channels} * es;
        const std::size_t row = px * in.shape.width;
        for (std::uint32_t y = 0; y < in.shape.height; ++y) {
            const std::byte* src = in.data.data() + y * row;
            std::byte* dst = out.data.data() + y * row;
            if (!flip) {
                std::memcpy(dst, src, row);
                continue;
            }
            switch (px) {
            case 1: mirror<1>(src, dst, in.shape.width); break;
            case 3: mirror<3>(src, dst, in.shape.width); break;
            case 4: mirror<4>(src, dst, in.shape.width); break;
            case 12: mirror<12>(src, dst, in.shape.width); break;
            default:
                for (std::uint32_t x = 0; x < in.shape.width; ++x) {
                    std::memcpy(dst + x * px, src + (in.shape.width - 1 - x) * px, px);
                }
            }
        }
    }

private:
    template <std::size_t Px>
    static void mirror(const std::byte* src, std::byte* dst, std::uint32_t width) {
        for (std::uint32_t x = 0; x < width; ++x) {
            std::memcpy(dst + std::size_t{x} * Px, src + std::size_t{width - 1 - x} * Px, Px);
        }
    }

    double p_;
};

class Crop final : public Transform {
public:
    Crop(std::uint32_t h, std::uint32_t w) : h_(h), w_(w) {
        if (h == 0 || w == 0) {
            fail(Errc::InvalidConfig, "crop: size must be positive");
        }
    }
    std::string_view name() const override { return "crop"; }
    TensorSpec output_spec(const TensorSpec& in) const override {
        require_pixels(in, name());
        if (in.height < h_ || in.width < w_) {
            fail(Errc::SpecMismatch, "crop: window larger than the input");
        }
        return {in.type, h_, w_, in.channels, 0};
    }
    void apply(const ConstTensorView& in, TensorView& out, SplitMix64& rng) const override {
        if (in.shape.height < h_ || in.shape.width < w_) {
            fail(Errc::SpecMismatch, "crop: image smaller than the window");
        }
        const std::uint64_t y0 = rng.below(in.shape.height - h_ + 1);
        const std::uint64_t x0 = rng.below(in.shape.width - w_ + 1);
        out.shape = {h_, w_, in.shape.channels, CodecId::Raw, 0};
        require_fits(in, out, name());
        const std::size_t px = std::size_t{in.shape.channels} * elem_size(in.type);
        const std::size_t src_row = px * in.shape.width;
        const std::size_t dst_row = px * w_;
        for (std::uint32_t y = 0; y < h_; ++y) {
            std::memcpy(out.data.data() + y * dst_row,
                        in.data.data() + (y0 + y) * src_row + x0 * px, dst_row);
        }
    }

private:
    std::uint32_t h_;
    std::uint32_t w_;
};

class Resize final : public Transform {
public:
    Resize(std::uint32_t h, std::uint32_t w) : h_(h), w_(w) {
        if (h == 0 || w == 0) {
            fail(Errc::InvalidConfig, "resize: size must be positive");
        }
    }
    std::string_view name() const override { return "resize"; }
    TensorSpec output_spec(const TensorSpec& in) const override {
        require_pixels(in, name());
        return {in.type, h_, w_, in.channels, 0};
    }
    void apply(const ConstTensorView& in, TensorView& out, SplitMix64&) const override {
        out.shape = {h_, w_, in.shape.channels, CodecId::Raw, 0};
        require_fits(in, out, name());
        if (in.shape.elements() == 0) {
            if (out.shape.elements() != 0) {
                fail(Errc::SpecMismatch, "resize: empty input");
            }
            return;
        }
        const std::size_t px = std::size_t{in.shape.channels} * elem_size(in.type);
        for (std::uint32_t y = 0; y < h_; ++y) {
            const std::uint64_t sy = std::uint64_t{y} * in.shape.height / h_;
            for (std::uint32_t x = 0; x < w_; ++x) {
                const std::uint64_t sx = std::uint64_t{x} * in.shape.width / w_;
                std::memcpy(out.data.data() + (std::size_t{y} * w_ + x) * px,
                            in.data.data() + (sy * in.shape.width + sx) * px, px);
            }
        }
    }

private:
    std::uint32_t h_;
    std::uint32_t w_;
};

class Cast final : public Transform {
public:
    std::string_view name() const override { return "cast"; }
    TensorSpec output_spec(const TensorSpec& in) const override {
        require_pixels(in, name());
        return {ElemType::F32, in.height, in.width, in.channels, 0};
    }
    void apply(const ConstTensorView& in, TensorView& out, SplitMix64&) const override {
        out.shape = in.shape;
        require_fits(in, out, name());
        const std::uint64_t n = in.shape.elements();
        float* dst = as_f32(out.data);
        if (in.type == ElemType::U8) {
            const std::uint8_t* src = as_u8(in.data);
            for (std::uint64_t i = 0; i < n; ++i) {
                dst[i] = static_cast<float>(src[i]);
            }
        } else if (n != 0) {
            std::memcpy(dst, in.data.data(), n * sizeof(float));
        }
    }
};

class Opaque final : public Transform {
public:
    Opaque(std::string name, OpaqueFn fn, SpecFn spec)
        : name_(std::move(name)), fn_(std::move(fn)), spec_(std::move(spec)) {}
    std::string_view name() const override { return name_; }
    Category category() const override { return Category::Opaque; }
    TensorSpec output_spec(const TensorSpec& in) const override { return spec_ ? spec_(in) : in; }
    void apply(const ConstTensorView& in, TensorView& out, SplitMix64& rng) const override {
        fn_(in, out, rng);
    }

private:
    std::string name_;
    OpaqueFn fn_;
    SpecFn spec_;
};

} // namespace

void copy_tensor(const ConstTensorView& in, TensorView& out) {
    out.type = in.type;
    out.shape = in.shape;
    const std::uint64_t n = in.used_bytes();
    if (n > out.data.size()) {
        fail(Errc::SpecMismatch, "copy: output exceeds its planned buffer");
    }
    if (n != 0) {
        std::memcpy(out.data.data(), in.data.data(), n);
    }
}

TransformPtr make_decode() { return std::make_shared<Decode>(); }
TransformPtr make_raw() { return std::make_shared<Raw>(); }
TransformPtr make_normalize(std::vector<float> mean, std::vector<float> std) {
    return std::make_shared<Normalize>(std::move(mean), std::move(std));
}
TransformPtr make_flip(double p) { return std::make_shared<Flip>(p); }
TransformPtr make_crop(std::uint32_t height, std::uint32_t width) {
    return std::make_shared<Crop>(height, width);
}
TransformPtr make_resize(std::uint32_t height, std::uint32_t width) {
    return std::make_shared<Resize>(height, width);
}
TransformPtr make_cast() { return std::make_shared<Cast>(); }

TransformPtr make_opaque(std::string name, OpaqueFn fn, SpecFn spec) {
    return std::make_shared<Opaque>(std::move(name), std::move(fn), std::move(spec));
}

TransformPtr make_opaque_identity() {
    return make_opaque("opaque_identity",
                       [](const ConstTensorView& in, TensorView& out, SplitMix64&) {
                           copy_tensor(in, out);
                       });
}

} // namespace bbox
