#include "glsgn/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#ifdef GLSGN_WITH_PNG
#include <png.h>
#endif

#include "glsgn/ops.hpp"

namespace glsgn {

Image::Image(int h, int w, float fill) : height(h), width(w) {
    require(h >= 1 && w >= 1, ErrorCode::InvalidArgument,
            "image dimensions must be at least 1x1, got " + std::to_string(h) + "x" + std::to_string(w));
    pixels.assign(size_t(3) * h * w, fill);
}

unsigned char quantize(float v) {
    const double scaled = std::floor(double(v) * 255.0 + 0.5);
    return static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0));
}

namespace {

struct HeaderReader {
    const std::string& bytes;
    size_t pos = 0;

    void skip_space_and_comments() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
    }

    long number(const char* what, const std::string& source) {
        skip_space_and_comments();
        size_t start = pos;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos || pos - start > 9)
            fail(ErrorCode::MalformedHeader, source + ": bad PPM " + what);
        return std::stol(bytes.substr(start, pos - start));
    }
};

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool is_png_path(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png";
}

#ifdef GLSGN_WITH_PNG
Image load_png(const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.string().c_str()))
        fail(ErrorCode::MalformedHeader, path.string() + ": " + png.message);
    png.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr))
        fail(ErrorCode::TruncatedPayload, path.string() + ": " + png.message);
    Image img{static_cast<int>(png.height), static_cast<int>(png.width)};
    img.source = path.string();
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = buf[(size_t(y) * img.width + x) * 3 + c] / 255.0f;
    return img;
}

void save_png(const Image& img, const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = png_uint_32(img.width);
    png.height = png_uint_32(img.height);
    png.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(size_t(3) * img.height * img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) buf[(size_t(y) * img.width + x) * 3 + c] = quantize(img.at(c, y, x));
    if (!png_image_write_to_file(&png, path.string().c_str(), 0, buf.data(), 0, nullptr))
        fail(ErrorCode::Io, path.string() + ": " + png.message);
}
#endif

} // namespace

bool png_supported() {
#ifdef GLSGN_WITH_PNG
    return true;
#else
    return false;
#endif
}

Image decode_ppm(const std::string& bytes, const std::string& source) {
    const std::string name = source.empty() ? std::string("<memory>") : source;
    if (bytes.size() < 2 || bytes[0] != 'P')
        fail(ErrorCode::MalformedHeader, name + ": missing PPM magic");
    if (bytes[1] != '6')
        fail(ErrorCode::UnsupportedFormat, name + ": unsupported format P" + std::string(1, bytes[1]) +
                                                ", only binary P6 is read");
    HeaderReader r{bytes, 2};
    if (r.pos >= bytes.size() || !(std::isspace(static_cast<unsigned char>(bytes[r.pos])) || bytes[r.pos] == '#'))
        fail(ErrorCode::MalformedHeader, name + ": missing whitespace after magic");
    const long width = r.number("width", name);
    const long height = r.number("height", name);
    const long maxval = r.number("maxval", name);
    if (width < 1 || height < 1)
        fail(ErrorCode::MalformedHeader, name + ": zero image dimension");
    if (maxval < 1 || maxval > 65535)
        fail(ErrorCode::MalformedHeader, name + ": maxval out of range");
    if (maxval != 255)
        fail(ErrorCode::UnsupportedMaxval, name + ": maxval " + std::to_string(maxval) + " unsupported (need 255)");
    if (r.pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[r.pos])))
        fail(ErrorCode::MalformedHeader, name + ": missing whitespace before payload");
    ++r.pos;
    const size_t need = size_t(width) * size_t(height) * 3;
    if (bytes.size() - r.pos < need)
        fail(ErrorCode::TruncatedPayload, name + ": payload has " + std::to_string(bytes.size() - r.pos) +
                                              " bytes, expected " + std::to_string(need));
    Image img{static_cast<int>(height), static_cast<int>(width)};
    img.source = source;
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + r.pos);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = float(*p++) / 255.0f;
    return img;
}

std::string encode_ppm(const Image& img) {
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    const size_t header = out.size();
    out.resize(header + size_t(3) * img.height * img.width);
    auto* p = reinterpret_cast<unsigned char*>(out.data() + header);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) *p++ = quantize(img.at(c, y, x));
    return out;
}

Image load_image(const std::filesystem::path& path) {
    if (is_png_path(path)) {
#ifdef GLSGN_WITH_PNG
        return load_png(path);
#else
        fail(ErrorCode::UnsupportedFormat, path.string() + ": PNG support not compiled in");
#endif
    }
    return decode_ppm(read_file(path), path.string());
}

void save_image(const Image& img, const std::filesystem::path& path) {
    if (is_png_path(path)) {
#ifdef GLSGN_WITH_PNG
        save_png(img, path);
        return;
#else
        fail(ErrorCode::UnsupportedFormat, path.string() + ": PNG support not compiled in");
#endif
    }
    const std::string bytes = encode_ppm(img);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(ErrorCode::Io, "cannot write " + path.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out)
        fail(ErrorCode::Io, "write failed for " + path.string());
}

namespace {
void require_same_dims(const Image& a, const Image& b, const char* what) {
    require(a.height == b.height && a.width == b.width, ErrorCode::ShapeMismatch,
            std::string(what) + ": image dimensions differ (" + std::to_string(a.height) + "x" +
                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
}
} // namespace

double psnr(const Image& a, const Image& b) {
    require_same_dims(a, b, "psnr");
    double acc = 0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = double(a.pixels[i]) - double(b.pixels[i]);
        acc += d * d;
    }
    const double mse = acc / double(a.pixels.size());
    if (mse == 0)
        return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace {

std::vector<double> gaussian_window_1d() {
    std::vector<double> g(kSsimWindow);
    double total = 0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double x = i - kSsimWindow / 2;
        g[size_t(i)] = std::exp(-x * x / (2 * 1.5 * 1.5));
        total += g[size_t(i)];
    }
    for (auto& v : g) v /= total;
    return g;
}

// Valid-mode separable filtering of a plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w, const std::vector<double>& g) {
    const int k = kSsimWindow, oh = h - k + 1, ow = w - k + 1;
    std::vector<double> rows(size_t(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i < k; ++i) s += g[size_t(i)] * plane[size_t(y) * w + x + i];
            rows[size_t(y) * ow + x] = s;
        }
    std::vector<double> out(size_t(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i < k; ++i) s += g[size_t(i)] * rows[size_t(y + i) * ow + x];
            out[size_t(y) * ow + x] = s;
        }
    return out;
}

} // namespace

double ssim(const Image& a, const Image& b) {
    require_same_dims(a, b, "ssim");
    require(a.height >= kSsimWindow && a.width >= kSsimWindow, ErrorCode::ShapeMismatch,
            "ssim: images must be at least 11x11");
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto g = gaussian_window_1d();
    const int h = a.height, w = a.width;
    const size_t n = size_t(h) * w;
    double total = 0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
        for (size_t i = 0; i < n; ++i) {
            pa[i] = a.pixels[size_t(c) * n + i];
            pb[i] = b.pixels[size_t(c) * n + i];
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        const auto mu_a = filter_valid(pa, h, w, g), mu_b = filter_valid(pb, h, w, g);
        const auto e_aa = filter_valid(aa, h, w, g), e_bb = filter_valid(bb, h, w, g), e_ab = filter_valid(ab, h, w, g);
        double acc = 0;
        for (size_t i = 0; i < mu_a.size(); ++i) {
            const double va = e_aa[i] - mu_a[i] * mu_a[i];
            const double vb = e_bb[i] - mu_b[i] * mu_b[i];
            const double cov = e_ab[i] - mu_a[i] * mu_b[i];
            acc += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
                   ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
        }
        total += acc / double(mu_a.size());
    }
    return total / 3.0;
}

std::string format_db(double db) {
    if (std::isinf(db))
        return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", db);
    return buf;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
    std::vector<T> v(img.pixels.begin(), img.pixels.end());
    return Tensor<T>({1, 3, img.height, img.width}, std::move(v));
}

template <typename T>
Image image_from_tensor(const Tensor<T>& t, int batch_index) {
    require(t.rank() == 4 && t.dim(1) == 3, ErrorCode::ShapeMismatch,
            "image_from_tensor: expected (B,3,H,W), got " + shape_str(t.shape()));
    Image img(t.dim(2), t.dim(3));
    const size_t len = img.pixels.size();
    const auto src = t.data().subspan(size_t(batch_index) * len, len);
    for (size_t i = 0; i < len; ++i) img.pixels[i] = std::clamp(float(src[i]), 0.0f, 1.0f);
    return img;
}

template <typename T>
Tensor<T> images_to_batch(const std::vector<Image>& imgs) {
    require(!imgs.empty(), ErrorCode::InvalidArgument, "images_to_batch: empty batch");
    std::vector<T> v;
    for (const auto& img : imgs) {
        require_same_dims(img, imgs.front(), "images_to_batch");
        v.insert(v.end(), img.pixels.begin(), img.pixels.end());
    }
    return Tensor<T>({int(imgs.size()), 3, imgs.front().height, imgs.front().width}, std::move(v));
}

Image resize_image(const Image& img, int height, int width) {
    if (img.height == height && img.width == width)
        return img;
    NoGradGuard guard;
    auto t = resize_bilinear(image_to_tensor<float>(img), height, width);
    Image out = image_from_tensor(t);
    out.source = img.source;
    return out;
}

Image crop_image(const Image& img, int top, int left, int height, int width) {
    require(top >= 0 && left >= 0 && height >= 1 && width >= 1 && top + height <= img.height &&
                left + width <= img.width,
            ErrorCode::InvalidArgument,
            "crop " + std::to_string(height) + "x" + std::to_string(width) + " at (" + std::to_string(top) + "," +
                std::to_string(left) + ") exceeds image " + std::to_string(img.height) + "x" +
                std::to_string(img.width));
    Image out(height, width);
    out.source = img.source;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) out.at(c, y, x) = img.at(c, top + y, left + x);
    return out;
}

Image center_crop(const Image& img, int height, int width) {
    return crop_image(img, (img.height - height) / 2, (img.width - width) / 2, height, width);
}

template Tensor<float> image_to_tensor<float>(const Image&);
template Tensor<double> image_to_tensor<double>(const Image&);
template Image image_from_tensor<float>(const Tensor<float>&, int);
template Image image_from_tensor<double>(const Tensor<double>&, int);
template Tensor<float> images_to_batch<float>(const std::vector<Image>&);
template Tensor<double> images_to_batch<double>(const std::vector<Image>&);

} // namespace glsgn
