#include "dehaze/image_io.hpp"
#include "dehaze/metrics.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace dehaze;
using dehaze::testing::TempDir;

namespace {

// Smooth analytic pair shared with tests/oracles/metric_oracles.py.
std::pair<Image, Image> analytic_pair()
{
    Image a(24, 20), b(24, 20);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 20; ++x)
            for (int c = 0; c < 3; ++c) {
                const double va = 0.5 + 0.4 * std::sin(0.31 * x + 0.17 * y + 1.3 * c);
                a.at(y, x, c) = va;
                b.at(y, x, c) = std::clamp(va + 0.08 * std::cos(0.23 * x - 0.41 * y + 0.7 * c), 0.0, 1.0);
            }
    return {a, b};
}

Image with_noise(const Image& img, double amplitude, std::uint64_t seed)
{
    nn::Rng rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Image out = img;
    for (auto& v : out.data())
        v += amplitude * dist(rng);
    return out;
}

} // namespace

TEST_CASE("PSNR, SSIM and mean CIEDE2000 match reference implementations")
{
    const auto [a, b] = analytic_pair();
    CHECK(psnr(a, b) == doctest::Approx(24.964011421846834).epsilon(1e-12));
    CHECK(ssim(a, b) == doctest::Approx(0.9468521661418839).epsilon(1e-9));
    CHECK(mean_ciede2000(a, b) == doctest::Approx(4.607343521729318).epsilon(1e-9));
}

TEST_CASE("sRGB to CIELAB matches the reference conversion")
{
    struct Case {
        double r, g, b, L, A, B;
    };
    const Case cases[] = {
        {1.0, 0.0, 0.0, 53.24079183328088, 80.09246954480042, 67.20319253649727},
        {0.0, 1.0, 0.0, 87.73471889497407, -86.18270151612145, 83.17931454093257},
        {0.0, 0.0, 1.0, 32.29700932295047, 79.18752678434748, -107.8601645298382},
        {0.2, 0.4, 0.6, 42.0081436628616, -0.15169986265223256, -32.84603952194887},
        {0.02, 0.01, 0.03, 0.9487567548835258, 1.3760142118911523, -1.6951688088950423},
        {0.5, 0.5, 0.5, 53.38896474111432, 0.0, 0.0},
    };
    for (const auto& c : cases) {
        const Lab lab = srgb_to_lab(c.r, c.g, c.b);
        CHECK(lab.L == doctest::Approx(c.L).epsilon(1e-10));
        CHECK(std::abs(lab.a - c.A) < 1e-9);
        CHECK(std::abs(lab.b - c.B) < 1e-9);
    }
}

TEST_CASE("CIELAB conversion round-trips")
{
    nn::Rng rng(9);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double r = dist(rng), g = dist(rng), b = dist(rng);
        double r2, g2, b2;
        lab_to_srgb(srgb_to_lab(r, g, b), r2, g2, b2);
        CHECK(std::abs(r - r2) < 1e-9);
        CHECK(std::abs(g - g2) < 1e-9);
        CHECK(std::abs(b - b2) < 1e-9);
    }
}

TEST_CASE("CIEDE2000 matches the published conformance pairs")
{
    std::ifstream in(std::string(DEHAZEKIT_TEST_DATA) + "/ciede2000_conformance.csv");
    REQUIRE(in);
    std::string line;
    int pairs = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        int id;
        Lab p, q;
        double expected;
        row >> id >> p.L >> p.a >> p.b >> q.L >> q.a >> q.b >> expected;
        REQUIRE(row);
        CAPTURE(id);
        CHECK(std::abs(ciede2000(p, q) - expected) < 1e-4);
        CHECK(std::abs(ciede2000(q, p) - expected) < 1e-4);
        ++pairs;
    }
    CHECK(pairs == 34);
    CHECK(ciede2000({50.0, 10.0, -20.0}, {50.0, 10.0, -20.0}) == 0.0);
    CHECK(ciede2000({0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}) == 0.0);
}

TEST_CASE("metric sanity properties")
{
    nn::Rng rng(4);
    const Image x = dehaze::testing::random_image(32, 40, rng);
    CHECK(ssim(x, x) == 1.0);
    CHECK(std::isinf(psnr(x, x)));
    CHECK(mean_ciede2000(x, x) == 0.0);

    Image shifted = x;
    for (auto& v : shifted.data())
        v = v > 0.5 ? v - 0.1 : v + 0.1;
    CHECK(std::abs(psnr(x, shifted) - 20.0) < 1e-9);

    const Image base = dehaze::testing::random_image(32, 40, rng, 0.3, 0.7);
    double previous = psnr(base, with_noise(base, 0.01, 1));
    for (double amplitude : {0.03, 0.1}) {
        const double next = psnr(base, with_noise(base, amplitude, 1));
        CHECK(next < previous);
        previous = next;
    }
    CHECK_THROWS_AS(psnr(x, Image(8, 8)), ValidationError);
    CHECK_THROWS_AS(ssim(Image(8, 8), Image(8, 8)), ValidationError);
}

TEST_CASE("evaluate_pairs pairs by file name and records skipped inputs")
{
    TempDir dir;
    std::filesystem::create_directories(dir / "pred");
    std::filesystem::create_directories(dir / "gt");
    nn::Rng rng(2);
    const Image a = dehaze::testing::random_image(16, 16, rng);
    const Image b = dehaze::testing::random_image(16, 16, rng);
    write_png(dir / "pred/one.png", a);
    write_png(dir / "gt/one.png", a);
    write_png(dir / "pred/two.png", a);
    write_png(dir / "gt/two.png", b);
    write_png(dir / "pred/orphan.png", a);
    std::ofstream(dir / "pred/broken.png") << "not an image";
    std::ofstream(dir / "gt/broken.png") << "not an image";

    const auto report = evaluate_pairs(dir / "pred", dir / "gt");
    REQUIRE(report.count() == 2);
    CHECK(report.images[0].id == "one.png");
    CHECK(std::isinf(report.images[0].psnr));
    CHECK(std::isfinite(report.images[1].psnr));
    CHECK(report.skipped.size() == 2);

    write_report_jsonl(dir / "report.jsonl", report);
    std::ifstream jsonl(dir / "report.jsonl");
    std::string line, last;
    int lines = 0;
    while (std::getline(jsonl, line)) {
        last = line;
        ++lines;
    }
    CHECK(lines == 5);
    CHECK(last.find("\"summary\"") != std::string::npos);

    TempDir empty;
    std::filesystem::create_directories(empty / "a");
    std::filesystem::create_directories(empty / "b");
    CHECK_THROWS_WITH_AS(evaluate_pairs(empty / "a", empty / "b"), doctest::Contains("no pairs found"), IoError);
}
