#include "dehaze/metrics.hpp"

#include "dehaze/image_io.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

namespace dehaze {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what)
{
    if (!a.same_shape(b))
        throw ValidationError(std::string(what) + ": shape mismatch (" + std::to_string(a.height()) + "x" +
                              std::to_string(a.width()) + "x" + std::to_string(a.channels()) + " vs " +
                              std::to_string(b.height()) + "x" + std::to_string(b.width()) + "x" +
                              std::to_string(b.channels()) + ")");
}

std::vector<double> gaussian_window()
{
    constexpr double sigma = 1.5;
    std::vector<double> w(kSsimWindow);
    double total = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        w[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        total += w[i];
    }
    for (auto& v : w)
        v /= total;
    return w;
}

// Separable 'valid' filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& k)
{
    const int n = static_cast<int>(k.size());
    const int oh = h - n + 1;
    const int ow = w - n + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i)
                acc += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
            rows[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i)
                acc += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    }
    return out;
}

constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

// Reference white = XYZ of RGB (1, 1, 1), so neutral greys map to a = b = 0.
constexpr double kWhite[3] = {
    kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2],
    kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2],
    kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2],
};

constexpr double kDelta = 6.0 / 29.0;

double srgb_to_linear(double c)
{
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c)
{
    return c <= 0.0031308 ? c * 12.92 : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t)
{
    return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inverse(double f)
{
    return f > kDelta ? f * f * f : 3.0 * kDelta * kDelta * (f - 4.0 / 29.0);
}

double deg(double rad)
{
    return rad * 180.0 / std::numbers::pi;
}

double rad(double deg)
{
    return deg * std::numbers::pi / 180.0;
}

std::string psnr_text(double v)
{
    if (std::isinf(v))
        return "inf";
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

nlohmann::json psnr_json(double v)
{
    if (std::isinf(v))
        return "inf";
    return v;
}

} // namespace

double psnr(const Image& a, const Image& b)
{
    require_same_shape(a, b, "psnr");
    if (a.empty())
        throw ValidationError("psnr: empty images");
    double acc = 0.0;
    const auto av = a.data();
    const auto bv = b.data();
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(av.size());
    if (mse == 0.0)
        return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b)
{
    require_same_shape(a, b, "ssim");
    if (a.height() < kSsimWindow || a.width() < kSsimWindow)
        throw ValidationError("ssim: image " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                              " is smaller than the 11x11 window");
    static const std::vector<double> window = gaussian_window();
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const int h = a.height();
    const int w = a.width();
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    double total = 0.0;
    std::size_t windows = 0;
    std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
    for (int c = 0; c < a.channels(); ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            x[i] = a.data()[i * a.channels() + c];
            y[i] = b.data()[i * b.channels() + c];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, h, w, window);
        const auto my = filter_valid(y, h, w, window);
        const auto exx = filter_valid(xx, h, w, window);
        const auto eyy = filter_valid(yy, h, w, window);
        const auto exy = filter_valid(xy, h, w, window);
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double sxx = exx[i] - mx[i] * mx[i];
            const double syy = eyy[i] - my[i] * my[i];
            const double sxy = exy[i] - mx[i] * my[i];
            const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * sxy + c2);
            const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (sxx + syy + c2);
            total += num / den;
        }
        windows += mx.size();
    }
    return total / static_cast<double>(windows);
}

Lab srgb_to_lab(double r, double g, double b)
{
    const double lin[3] = {srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b)};
    double f[3];
    for (int i = 0; i < 3; ++i) {
        const double v = kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
        f[i] = lab_f(v / kWhite[i]);
    }
    return {116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])};
}

void lab_to_srgb(const Lab& lab, double& r, double& g, double& b)
{
    static const Eigen::Matrix3d inverse = [] {
        Eigen::Matrix3d m;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                m(i, j) = kRgbToXyz[i][j];
        return Eigen::Matrix3d(m.inverse());
    }();
    const double fy = (lab.L + 16.0) / 116.0;
    const Eigen::Vector3d xyz(lab_f_inverse(fy + lab.a / 500.0) * kWhite[0], lab_f_inverse(fy) * kWhite[1],
                              lab_f_inverse(fy - lab.b / 200.0) * kWhite[2]);
    const Eigen::Vector3d lin = inverse * xyz;
    r = linear_to_srgb(lin[0]);
    g = linear_to_srgb(lin[1]);
    b = linear_to_srgb(lin[2]);
}

LabImage srgb_to_lab(const Image& img)
{
    if (img.channels() != 3)
        throw ValidationError("channel mismatch: srgb_to_lab needs 3 channels");
    LabImage out{img.height(), img.width(), {}};
    out.pixels.reserve(static_cast<std::size_t>(img.height()) * img.width());
    const auto v = img.data();
    for (std::size_t i = 0; i + 2 < v.size(); i += 3)
        out.pixels.push_back(srgb_to_lab(v[i], v[i + 1], v[i + 2]));
    return out;
}

double ciede2000(const Lab& p, const Lab& q)
{
    constexpr double pow25_7 = 6103515625.0; // 25^7
    const double c1 = std::hypot(p.a, p.b);
    const double c2 = std::hypot(q.a, q.b);
    const double c_bar = 0.5 * (c1 + c2);
    const double c_bar7 = std::pow(c_bar, 7.0);
    const double g = 0.5 * (1.0 - std::sqrt(c_bar7 / (c_bar7 + pow25_7)));

    const double a1 = (1.0 + g) * p.a;
    const double a2 = (1.0 + g) * q.a;
    const double cp1 = std::hypot(a1, p.b);
    const double cp2 = std::hypot(a2, q.b);
    auto hue = [](double b, double a) {
        if (a == 0.0 && b == 0.0)
            return 0.0;
        double h = deg(std::atan2(b, a));
        return h < 0.0 ? h + 360.0 : h;
    };
    const double h1 = hue(p.b, a1);
    const double h2 = hue(q.b, a2);

    const double dl = q.L - p.L;
    const double dc = cp2 - cp1;
    const double chroma_product = cp1 * cp2;
    double dh = 0.0;
    if (chroma_product != 0.0) {
        dh = h2 - h1;
        if (dh > 180.0)
            dh -= 360.0;
        else if (dh < -180.0)
            dh += 360.0;
    }
    const double d_big_h = 2.0 * std::sqrt(chroma_product) * std::sin(rad(dh) / 2.0);

    const double l_bar = 0.5 * (p.L + q.L);
    const double cp_bar = 0.5 * (cp1 + cp2);
    double h_bar = h1 + h2;
    if (chroma_product != 0.0) {
        if (std::abs(h1 - h2) <= 180.0)
            h_bar = 0.5 * (h1 + h2);
        else if (h1 + h2 < 360.0)
            h_bar = 0.5 * (h1 + h2 + 360.0);
        else
            h_bar = 0.5 * (h1 + h2 - 360.0);
    }

    const double t = 1.0 - 0.17 * std::cos(rad(h_bar - 30.0)) + 0.24 * std::cos(rad(2.0 * h_bar)) +
                     0.32 * std::cos(rad(3.0 * h_bar + 6.0)) - 0.20 * std::cos(rad(4.0 * h_bar - 63.0));
    const double d_theta = 30.0 * std::exp(-std::pow((h_bar - 275.0) / 25.0, 2.0));
    const double cp_bar7 = std::pow(cp_bar, 7.0);
    const double r_c = 2.0 * std::sqrt(cp_bar7 / (cp_bar7 + pow25_7));
    const double l50 = (l_bar - 50.0) * (l_bar - 50.0);
    const double s_l = 1.0 + 0.015 * l50 / std::sqrt(20.0 + l50);
    const double s_c = 1.0 + 0.045 * cp_bar;
    const double s_h = 1.0 + 0.015 * cp_bar * t;
    const double r_t = -std::sin(rad(2.0 * d_theta)) * r_c;

    const double tl = dl / s_l;
    const double tc = dc / s_c;
    const double th = d_big_h / s_h;
    return std::sqrt(std::max(0.0, tl * tl + tc * tc + th * th + r_t * tc * th));
}

double mean_ciede2000(const Image& a, const Image& b)
{
    require_same_shape(a, b, "ciede2000");
    const auto la = srgb_to_lab(a);
    const auto lb = srgb_to_lab(b);
    double total = 0.0;
    for (std::size_t i = 0; i < la.pixels.size(); ++i)
        total += ciede2000(la.pixels[i], lb.pixels[i]);
    return la.pixels.empty() ? 0.0 : total / static_cast<double>(la.pixels.size());
}

void MetricsReport::finalize()
{
    mean_psnr = mean_ssim = mean_ciede2000 = 0.0;
    if (images.empty())
        return;
    for (const auto& m : images) {
        mean_psnr += m.psnr;
        mean_ssim += m.ssim;
        mean_ciede2000 += m.ciede2000;
    }
    const double n = static_cast<double>(images.size());
    mean_psnr /= n;
    mean_ssim /= n;
    mean_ciede2000 /= n;
}

ImageMetrics measure(const std::string& id, const Image& prediction, const Image& ground_truth)
{
    const Image pred = quantize_8bit(prediction);
    return {id, psnr(pred, ground_truth), ssim(pred, ground_truth), mean_ciede2000(pred, ground_truth)};
}

MetricsReport evaluate_pairs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir)
{
    namespace fs = std::filesystem;
    auto list = [](const fs::path& dir) {
        std::map<std::string, fs::path> files;
        std::error_code ec;
        if (!fs::is_directory(dir, ec))
            return files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && is_image_file(entry.path()))
                files.emplace(entry.path().filename().string(), entry.path());
        }
        return files;
    };
    const auto preds = list(pred_dir);
    const auto gts = list(gt_dir);

    MetricsReport report;
    for (const auto& [name, path] : preds) {
        auto it = gts.find(name);
        if (it == gts.end()) {
            spdlog::warn("no ground truth for prediction {}", name);
            report.skipped.push_back(name + ": no ground truth");
            continue;
        }
        try {
            report.images.push_back(measure(name, read_image(path), read_image(it->second)));
        } catch (const Error& e) {
            spdlog::warn("skipping {}: {}", name, e.what());
            report.skipped.push_back(name + ": " + e.what());
        }
    }
    for (const auto& [name, path] : gts) {
        if (!preds.contains(name)) {
            spdlog::warn("no prediction for ground truth {}", name);
            report.skipped.push_back(name + ": no prediction");
        }
    }
    if (report.images.empty())
        throw IoError("no pairs found between " + pred_dir.string() + " and " + gt_dir.string());
    report.finalize();
    return report;
}

void print_report(std::ostream& os, const MetricsReport& report)
{
    os << std::left << std::setw(32) << "image" << std::right << std::setw(12) << "PSNR" << std::setw(10) << "SSIM"
       << std::setw(12) << "CIEDE2000" << '\n';
    auto row = [&os](const std::string& id, double p, double s, double c) {
        os << std::left << std::setw(32) << id << std::right << std::setw(12) << psnr_text(p) << std::setw(10)
           << std::fixed << std::setprecision(4) << s << std::setw(12) << c << '\n';
    };
    for (const auto& m : report.images)
        row(m.id, m.psnr, m.ssim, m.ciede2000);
    row("mean (" + std::to_string(report.count()) + " images)", report.mean_psnr, report.mean_ssim,
        report.mean_ciede2000);
    for (const auto& s : report.skipped)
        os << "skipped: " << s << '\n';
}

void write_report_jsonl(const std::filesystem::path& path, const MetricsReport& report)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write report " + path.string());
    for (const auto& m : report.images) {
        nlohmann::json rec{{"type", "image"}, {"id", m.id}, {"psnr", psnr_json(m.psnr)}, {"ssim", m.ssim},
                           {"ciede2000", m.ciede2000}};
        out << rec.dump() << '\n';
    }
    for (const auto& s : report.skipped)
        out << nlohmann::json{{"type", "skipped"}, {"reason", s}}.dump() << '\n';
    nlohmann::json summary{{"type", "summary"},
                           {"count", report.count()},
                           {"psnr", psnr_json(report.mean_psnr)},
                           {"ssim", report.mean_ssim},
                           {"ciede2000", report.mean_ciede2000},
                           {"skipped", report.skipped.size()}};
    out << summary.dump() << '\n';
    if (!out)
        throw IoError("cannot write report " + path.string());
}

} // namespace dehaze
