#pragma once

#include "medseg/image.hpp"
#include "medseg/rng.hpp"

namespace medseg {

// Stochastic augmentation chain: square random resized crop, horizontal
// flip, additive brightness, mean-anchored contrast. Geometric ops are shared
// between image and mask; photometric ops touch the image only. Defaults are
// configuration values, not paper-stated magnitudes.
struct AugmentConfig {
    int output_size = 64;
    double crop_scale_lo = 0.4;  // crop area as a fraction of the source area
    double crop_scale_hi = 1.0;
    double hflip_prob = 0.5;
    double brightness_delta_max = 0.4;
    double contrast_lo = 0.6;
    double contrast_hi = 1.4;

    void validate() const;
    static AugmentConfig identity(int output_size);
};

struct ViewPair {
    Image2D view1;
    Image2D view2;
};

// One sampled pass through the chain. Every application draws exactly these
// six values regardless of configuration, so the rng advances by a fixed
// amount and derived streams stay aligned.
struct ChainDraws {
    double scale_u = 0.0;       // crop area fraction position within [lo, hi]
    double top_u = 0.0;         // crop origin, uniform position
    double left_u = 0.0;
    double flip_u = 1.0;        // flip iff flip_u < hflip_prob
    double brightness_u = 0.5;  // delta = (2u-1) * brightness_delta_max
    double contrast_u = 0.0;    // factor position within [lo, hi]
};

ChainDraws draw_chain(Rng& rng);

// Applies one draw of the chain. mask may be null (SSL views).
void apply_chain(const Image2D& image, const Mask2D* mask, const AugmentConfig& cfg,
                 const ChainDraws& d, Image2D* out_image, Mask2D* out_mask);

// Two independent draws of the chain over the same source slice.
ViewPair make_view_pair(const Image2D& image, const AugmentConfig& cfg, Rng& rng);

// Single draw; identical crop/flip for image and mask, photometric ops on the
// image only, nearest-neighbour resampling for the mask.
std::pair<Image2D, Mask2D> augment_labeled_pair(const Image2D& image, const Mask2D& mask,
                                                const AugmentConfig& cfg, Rng& rng);

}  // namespace medseg
