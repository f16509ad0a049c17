#include "medseg/image.hpp"

#include <cmath>

#include "medseg/errors.hpp"

#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wdeprecated-enum-enum-conversion"
#include <opencv2/imgcodecs.hpp>
#pragma GCC diagnostic pop

namespace medseg {

Image2D load_image_png(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw FormatError("cannot read image: " + path.string());
    if (m.channels() != 1)
        throw FormatError("expected grayscale image, got " + std::to_string(m.channels()) +
                          " channels: " + path.string());
    Image2D img = Image2D::zeros(m.rows, m.cols);
    if (m.depth() == CV_8U) {
        for (long y = 0; y < img.h; ++y)
            for (long x = 0; x < img.w; ++x)
                img.at(y, x) = m.at<uint8_t>(static_cast<int>(y), static_cast<int>(x)) / 255.0;
    } else if (m.depth() == CV_16U) {
        for (long y = 0; y < img.h; ++y)
            for (long x = 0; x < img.w; ++x)
                img.at(y, x) = m.at<uint16_t>(static_cast<int>(y), static_cast<int>(x)) / 65535.0;
    } else {
        throw FormatError("unsupported image depth (want 8- or 16-bit): " + path.string());
    }
    return img;
}

Mask2D load_mask_png(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw FormatError("cannot read mask: " + path.string());
    if (m.channels() != 1 || m.depth() != CV_8U)
        throw FormatError("expected 8-bit grayscale mask: " + path.string());
    Mask2D mask = Mask2D::zeros(m.rows, m.cols);
    for (long y = 0; y < mask.h; ++y)
        for (long x = 0; x < mask.w; ++x)
            mask.at(y, x) = m.at<uint8_t>(static_cast<int>(y), static_cast<int>(x));
    return mask;
}

void save_image_png16(const Image2D& img, const std::filesystem::path& path) {
    cv::Mat m(static_cast<int>(img.h), static_cast<int>(img.w), CV_16UC1);
    for (long y = 0; y < img.h; ++y)
        for (long x = 0; x < img.w; ++x) {
            double v = std::clamp(img.at(y, x), 0.0, 1.0);
            m.at<uint16_t>(static_cast<int>(y), static_cast<int>(x)) =
                static_cast<uint16_t>(std::lround(v * 65535.0));
        }
    if (!cv::imwrite(path.string(), m))
        throw FormatError("cannot write image: " + path.string());
}

void save_mask_png(const Mask2D& mask, const std::filesystem::path& path) {
    cv::Mat m(static_cast<int>(mask.h), static_cast<int>(mask.w), CV_8UC1);
    for (long y = 0; y < mask.h; ++y)
        for (long x = 0; x < mask.w; ++x)
            m.at<uint8_t>(static_cast<int>(y), static_cast<int>(x)) = mask.at(y, x);
    if (!cv::imwrite(path.string(), m))
        throw FormatError("cannot write mask: " + path.string());
}

}  // namespace medseg
