#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace medseg {

// Grayscale image, values in [0,1].
struct Image2D {
    long h = 0, w = 0;
    std::vector<double> px;

    double at(long y, long x) const { return px[static_cast<size_t>(y * w + x)]; }
    double& at(long y, long x) { return px[static_cast<size_t>(y * w + x)]; }
    static Image2D zeros(long h, long w) {
        return Image2D{h, w, std::vector<double>(static_cast<size_t>(h * w), 0.0)};
    }
};

// Class-id mask; 0 = background.
struct Mask2D {
    long h = 0, w = 0;
    std::vector<uint8_t> cls;

    uint8_t at(long y, long x) const { return cls[static_cast<size_t>(y * w + x)]; }
    uint8_t& at(long y, long x) { return cls[static_cast<size_t>(y * w + x)]; }
    static Mask2D zeros(long h, long w) {
        return Mask2D{h, w, std::vector<uint8_t>(static_cast<size_t>(h * w), 0)};
    }
};

// PNG I/O. Images: 8- or 16-bit grayscale, normalized to [0,1] on load,
// written as 16-bit. Masks: 8-bit raw class ids.
Image2D load_image_png(const std::filesystem::path& path);
Mask2D load_mask_png(const std::filesystem::path& path);
void save_image_png16(const Image2D& img, const std::filesystem::path& path);
void save_mask_png(const Mask2D& mask, const std::filesystem::path& path);

}  // namespace medseg
