#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "glsgn/tensor.hpp"

namespace glsgn {

// 3-channel planar (CHW) image with values in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> pixels; // 3 * height * width, channel-major
    std::string source;        // provenance, empty for generated images

    Image() = default;
    Image(int h, int w, float fill = 0.0f);

    float& at(int c, int y, int x) { return pixels[(size_t(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return pixels[(size_t(c) * height + y) * width + x]; }
    size_t size() const { return pixels.size(); }
};

Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);

// Binary PPM (P6, maxval 255).
Image decode_ppm(const std::string& bytes, const std::string& source = {});
std::string encode_ppm(const Image& img);

bool png_supported();

// round(v * 255) with halves rounded up, clamped to [0, 255].
unsigned char quantize(float v);

// 10 * log10(1 / MSE) with a peak of 1; +infinity when the images are equal.
double psnr(const Image& a, const Image& b);

// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5, K1 0.01, K2 0.03,
// dynamic range 1), computed per channel and averaged.
double ssim(const Image& a, const Image& b);

inline constexpr int kSsimWindow = 11;

std::string format_db(double db);

// Conversions between images and (1,3,H,W) tensors; image_from_tensor clamps.
template <typename T>
Tensor<T> image_to_tensor(const Image& img);
template <typename T>
Image image_from_tensor(const Tensor<T>& t, int batch_index = 0);
template <typename T>
Tensor<T> images_to_batch(const std::vector<Image>& imgs);

Image resize_image(const Image& img, int height, int width);
Image crop_image(const Image& img, int top, int left, int height, int width);
Image center_crop(const Image& img, int height, int width);

} // namespace glsgn
