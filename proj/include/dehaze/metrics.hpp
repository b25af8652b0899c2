#pragma once

#include "dehaze/core.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dehaze {

struct Lab {
    double L = 0.0;
    double a = 0.0;
    double b = 0.0;
};

/// CIELAB (D65, 2 degree observer) image; pixel order matches the source Image.
struct LabImage {
    int height = 0;
    int width = 0;
    std::vector<Lab> pixels;
};

/// 10 log10(1 / MSE) over every pixel and channel; +infinity when MSE is 0.
double psnr(const Image& a, const Image& b);

inline constexpr int kSsimWindow = 11;

/// Gaussian-windowed SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, dynamic range 1),
/// averaged over all valid window positions and channels.
double ssim(const Image& a, const Image& b);

Lab srgb_to_lab(double r, double g, double b);
/// Inverse of srgb_to_lab; out-of-gamut results are not clamped.
void lab_to_srgb(const Lab& lab, double& r, double& g, double& b);
LabImage srgb_to_lab(const Image& img);

/// CIEDE2000 colour difference with k_L = k_C = k_H = 1.
double ciede2000(const Lab& p, const Lab& q);

/// Mean per-pixel CIEDE2000 between two sRGB images.
double mean_ciede2000(const Image& a, const Image& b);

struct ImageMetrics {
    std::string id;
    double psnr = 0.0;
    double ssim = 0.0;
    double ciede2000 = 0.0;
};

struct MetricsReport {
    std::vector<ImageMetrics> images;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_ciede2000 = 0.0;
    /// Inputs that could not be paired or read, with the reason.
    std::vector<std::string> skipped;

    std::size_t count() const { return images.size(); }
    /// Recomputes the means from `images`.
    void finalize();
};

/// Metrics of a prediction against ground truth, after the 8-bit round trip.
ImageMetrics measure(const std::string& id, const Image& prediction, const Image& ground_truth);

/// Pairs files with identical names in both directories, sorted by name.
/// Throws IoError("no pairs found") when nothing pairs up.
MetricsReport evaluate_pairs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir);

/// Fixed-width human-readable table.
void print_report(std::ostream& os, const MetricsReport& report);

/// JSON Lines: one {"type":"image",...} record per image, skipped entries,
/// then one {"type":"summary",...} record. Infinite PSNR is written as "inf".
void write_report_jsonl(const std::filesystem::path& path, const MetricsReport& report);

} // namespace dehaze
