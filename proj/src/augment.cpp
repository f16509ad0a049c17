#include "medseg/augment.hpp"

#include <algorithm>
#include <cmath>

#include "medseg/errors.hpp"
#include "medseg/kernels.hpp"
#include "medseg/tensor.hpp"

namespace medseg {

void AugmentConfig::validate() const {
    if (output_size < 1) throw ArgumentError("AugmentConfig: output_size must be >= 1");
    if (!(crop_scale_lo > 0.0) || crop_scale_lo > crop_scale_hi || crop_scale_hi > 1.0)
        throw ArgumentError("AugmentConfig: crop scale range must satisfy 0 < lo <= hi <= 1");
    if (hflip_prob < 0.0 || hflip_prob > 1.0)
        throw ArgumentError("AugmentConfig: hflip_prob must be in [0,1]");
    if (brightness_delta_max < 0.0)
        throw ArgumentError("AugmentConfig: brightness_delta_max must be >= 0");
    if (!(contrast_lo > 0.0) || contrast_lo > contrast_hi)
        throw ArgumentError("AugmentConfig: contrast range must satisfy 0 < lo <= hi");
}

AugmentConfig AugmentConfig::identity(int output_size) {
    AugmentConfig cfg;
    cfg.output_size = output_size;
    cfg.crop_scale_lo = cfg.crop_scale_hi = 1.0;
    cfg.hflip_prob = 0.0;
    cfg.brightness_delta_max = 0.0;
    cfg.contrast_lo = cfg.contrast_hi = 1.0;
    return cfg;
}

ChainDraws draw_chain(Rng& rng) {
    ChainDraws d;
    d.scale_u = rng.uniform();
    d.top_u = rng.uniform();
    d.left_u = rng.uniform();
    d.flip_u = rng.uniform();
    d.brightness_u = rng.uniform();
    d.contrast_u = rng.uniform();
    return d;
}

namespace {

Image2D tensor_to_image(const Tensor& t) {
    Image2D img = Image2D::zeros(t.dim(0), t.dim(1));
    std::copy(t.data(), t.data() + t.numel(), img.px.begin());
    return img;
}

}  // namespace

void apply_chain(const Image2D& image, const Mask2D* mask, const AugmentConfig& cfg,
                 const ChainDraws& d, Image2D* out_image, Mask2D* out_mask) {
    cfg.validate();
    if (image.h < 1 || image.w < 1) throw ArgumentError("apply_chain: empty image");
    if (mask && (mask->h != image.h || mask->w != image.w))
        throw ArgumentError("apply_chain: mask shape does not match image");

    // square crop whose area is `scale` of the source area; clamped so a
    // large draw never exceeds the image
    const double scale = cfg.crop_scale_lo + d.scale_u * (cfg.crop_scale_hi - cfg.crop_scale_lo);
    const double want =
        std::sqrt(scale * static_cast<double>(image.h) * static_cast<double>(image.w));
    const long side = std::clamp<long>(std::lround(want), 1, std::min(image.h, image.w));
    const long top = static_cast<long>(d.top_u * static_cast<double>(image.h - side + 1));
    const long left = static_cast<long>(d.left_u * static_cast<double>(image.w - side + 1));
    const bool flip = d.flip_u < cfg.hflip_prob;

    // crop -> resize(bilinear) -> flip
    Tensor crop({side, side});
    for (long y = 0; y < side; ++y)
        for (long x = 0; x < side; ++x) crop.at2(y, x) = image.at(top + y, left + x);
    Tensor resized({cfg.output_size, cfg.output_size});
    kernels::resize_bilinear(crop, resized);
    if (flip) {
        for (long y = 0; y < cfg.output_size; ++y)
            for (long x = 0; x < cfg.output_size / 2; ++x)
                std::swap(resized.at2(y, x), resized.at2(y, cfg.output_size - 1 - x));
    }

    // photometric: brightness shift then mean-anchored contrast, clamped
    const double delta = (2.0 * d.brightness_u - 1.0) * cfg.brightness_delta_max;
    const double factor = cfg.contrast_lo + d.contrast_u * (cfg.contrast_hi - cfg.contrast_lo);
    for (long i = 0; i < resized.numel(); ++i) resized[i] += delta;
    double mean = resized.sum() / static_cast<double>(resized.numel());
    for (long i = 0; i < resized.numel(); ++i)
        resized[i] = std::clamp(mean + (resized[i] - mean) * factor, 0.0, 1.0);
    *out_image = tensor_to_image(resized);

    if (mask && out_mask) {
        std::vector<uint8_t> mcrop(static_cast<size_t>(side * side));
        for (long y = 0; y < side; ++y)
            for (long x = 0; x < side; ++x)
                mcrop[static_cast<size_t>(y * side + x)] = mask->at(top + y, left + x);
        Mask2D m = Mask2D::zeros(cfg.output_size, cfg.output_size);
        kernels::resize_nearest_u8(mcrop, side, side, m.cls, cfg.output_size, cfg.output_size);
        if (flip) {
            for (long y = 0; y < cfg.output_size; ++y)
                for (long x = 0; x < cfg.output_size / 2; ++x)
                    std::swap(m.at(y, x), m.at(y, cfg.output_size - 1 - x));
        }
        *out_mask = std::move(m);
    }
}

ViewPair make_view_pair(const Image2D& image, const AugmentConfig& cfg, Rng& rng) {
    ViewPair pair;
    apply_chain(image, nullptr, cfg, draw_chain(rng), &pair.view1, nullptr);
    apply_chain(image, nullptr, cfg, draw_chain(rng), &pair.view2, nullptr);
    return pair;
}

std::pair<Image2D, Mask2D> augment_labeled_pair(const Image2D& image, const Mask2D& mask,
                                                const AugmentConfig& cfg, Rng& rng) {
    Image2D out_img;
    Mask2D out_mask;
    apply_chain(image, &mask, cfg, draw_chain(rng), &out_img, &out_mask);
    return {std::move(out_img), std::move(out_mask)};
}

}  // namespace medseg
