#include "dehaze/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

namespace dehaze {

namespace {

std::uint8_t to_code(double v)
{
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

} // namespace

Image read_image(const std::filesystem::path& path)
{
    const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty())
        throw IoError("cannot decode image " + path.string());
    Image img(bgr.rows, bgr.cols, 3);
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            img.at(y, x, 0) = row[x][2] / 255.0;
            img.at(y, x, 1) = row[x][1] / 255.0;
            img.at(y, x, 2) = row[x][0] / 255.0;
        }
    }
    return img;
}

void write_png(const std::filesystem::path& path, const Image& image)
{
    if (image.channels() != 3 && image.channels() != 1)
        throw ValidationError("write_png: expected 1 or 3 channels, got " + std::to_string(image.channels()));
    cv::Mat mat(image.height(), image.width(), image.channels() == 3 ? CV_8UC3 : CV_8UC1);
    for (int y = 0; y < image.height(); ++y) {
        auto* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < image.width(); ++x) {
            if (image.channels() == 3) {
                row[3 * x + 0] = to_code(image.at(y, x, 2));
                row[3 * x + 1] = to_code(image.at(y, x, 1));
                row[3 * x + 2] = to_code(image.at(y, x, 0));
            } else {
                row[x] = to_code(image.at(y, x, 0));
            }
        }
    }
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), mat);
    } catch (const cv::Exception& e) {
        throw IoError("cannot write " + path.string() + ": " + e.what());
    }
    if (!ok)
        throw IoError("cannot write " + path.string());
}

Image quantize_8bit(const Image& image)
{
    Image out = image;
    for (auto& v : out.data())
        v = to_code(v) / 255.0;
    return out;
}

bool is_image_file(const std::filesystem::path& path)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

} // namespace dehaze
