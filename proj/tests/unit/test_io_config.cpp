#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "rotstar/config.hpp"
#include "rotstar/error.hpp"
#include "rotstar/io.hpp"

using namespace rotstar;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("rotstar_io_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    fs::path dir_;
};

ImageF random_image(int w, int h, std::uint64_t seed) {
    ImageF img(w, h);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : img.pixels()) v = u(rng);
    return img;
}

double max_abs_diff(const ImageF& a, const ImageF& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.pixels()[i] - b.pixels()[i]));
    return m;
}

std::string config_error(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Quantize, RoundsAndClamps) {
    EXPECT_EQ(quantize(0.0, 8), 0);
    EXPECT_EQ(quantize(1.0, 8), 255);
    EXPECT_EQ(quantize(0.5, 8), 128);
    EXPECT_EQ(quantize(-0.2, 8), 0);
    EXPECT_EQ(quantize(1.7, 16), 65535);
    EXPECT_EQ(quantize(0.25, 16), 16384);
}

using ImageIo = TempDir;

TEST_F(ImageIo, RoundTripWithinQuantisation) {
    const ImageF img = random_image(37, 23, 1);
    for (const char* ext : {".png", ".pgm"}) {
        for (int bits : {8, 16}) {
            const fs::path p = dir_ / (std::string("img") + std::to_string(bits) + ext);
            write_image(p, img, bits);
            const ImageF back = read_image(p);
            ASSERT_TRUE(back.same_shape(img)) << p;
            EXPECT_LE(max_abs_diff(img, back), 0.5 / ((1 << bits) - 1) + 1e-12) << p;
        }
    }
}

TEST_F(ImageIo, QuantisedValuesAreExact) {
    ImageF img(4, 3);
    for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 4; ++x) img.at(x, y) = (x + 4 * y) / 255.0;
    }
    write_png(dir_ / "a.png", img);
    write_pgm(dir_ / "a.pgm", img);
    EXPECT_LT(max_abs_diff(read_png(dir_ / "a.png"), img), 1e-12);
    EXPECT_LT(max_abs_diff(read_pgm(dir_ / "a.pgm"), img), 1e-12);
}

TEST_F(ImageIo, NormalizedAndMaskExports) {
    ImageF img(3, 1);
    img.at(0, 0) = 0.0;
    img.at(1, 0) = 2.0;
    img.at(2, 0) = 4.0;
    write_normalized_pgm(dir_ / "n.pgm", img);
    const ImageF n = read_pgm(dir_ / "n.pgm");
    EXPECT_DOUBLE_EQ(n.at(2, 0), 1.0);
    EXPECT_NEAR(n.at(1, 0), 0.5, 0.5 / 255.0);
    Mask m(2, 2);
    m.set(1, 0, true);
    write_mask_pgm(dir_ / "m.pgm", m);
    const ImageF mm = read_pgm(dir_ / "m.pgm");
    EXPECT_EQ(mm.at(1, 0), 1.0);
    EXPECT_EQ(mm.at(0, 1), 0.0);
}

TEST_F(ImageIo, ErrorsAreTyped) {
    EXPECT_THROW(read_png(dir_ / "missing.png"), IoError);
    EXPECT_THROW(read_image(dir_ / "x.tiff"), IoError);
    write_text_file(dir_ / "junk.pgm", "P6\n1 1\n255\n0\n");
    EXPECT_THROW(read_pgm(dir_ / "junk.pgm"), IoError);
    write_text_file(dir_ / "junk.pgm", "P5\n4 4\n255\nab");
    EXPECT_THROW(read_pgm(dir_ / "junk.pgm"), IoError);
    EXPECT_THROW(write_png(dir_ / "bad.png", ImageF(2, 2), 12), std::exception);
    ensure_directory(dir_ / "a" / "b");
    EXPECT_TRUE(fs::is_directory(dir_ / "a" / "b"));
    write_text_file(dir_ / "t.txt", "hello\n");
    EXPECT_EQ(read_text_file(dir_ / "t.txt"), "hello\n");
}

using JsonFiles = TempDir;

TEST_F(JsonFiles, LoadErrors) {
    EXPECT_THROW(load_json(dir_ / "none.json"), IoError);
    write_text_file(dir_ / "bad.json", "{ \"a\": ");
    EXPECT_THROW(load_json(dir_ / "bad.json"), ConfigError);
    save_json(dir_ / "ok.json", Json{{"a", 1}});
    EXPECT_EQ(load_json(dir_ / "ok.json").at("a"), 1);
}

TEST(ConfigJson, RoundTrips) {
    PatternSpec s;
    s.kind = PatternKind::checkerboard;
    s.grid_rows = 7;
    s.stripe_width = 0.07;
    const PatternSpec s2 = pattern_spec_from_json(to_json(s));
    EXPECT_EQ(s2.kind, s.kind);
    EXPECT_EQ(s2.grid_rows, 7);
    EXPECT_DOUBLE_EQ(s2.effective_stripe_width(), 0.07);

    AberrationCoeffs a;
    a.w_coma = 4.0;
    a.w_sph = -1.5;
    const AberrationCoeffs a2 = aberration_from_json(to_json(a));
    EXPECT_EQ(a2.w_coma, 4.0);
    EXPECT_EQ(a2.w_sph, -1.5);

    BoardPose p;
    p.phi_deg = 20.0;
    p.alpha_deg = 135.0;
    p.intrinsics.focal_px = 1234.5;
    const BoardPose p2 = pose_from_json(to_json(p));
    EXPECT_EQ(p2.alpha_deg, 135.0);
    EXPECT_EQ(p2.intrinsics.focal_px, 1234.5);

    RefineConfig r;
    r.half_window = 7;
    r.rng_seed = 99;
    EXPECT_EQ(to_json(refine_config_from_json(to_json(r))), to_json(r));

    DetectOptions d;
    d.rect_kind = RectKind::min_area;
    EXPECT_EQ(to_json(detect_options_from_json(to_json(d))), to_json(d));

    RigGeometry g;
    g.cell_px = 80.0;
    g.psf.out_size = 65;
    EXPECT_EQ(to_json(geometry_from_json(to_json(g))), to_json(g));

    NoiseSpec n{0.02, 5};
    const NoiseSpec n2 = noise_from_json(to_json(n));
    EXPECT_EQ(n2.sigma_n, 0.02);
    EXPECT_EQ(n2.seed, 5u);
}

TEST(ConfigJson, SweepProfileAndOverrides) {
    const SweepConfig full = sweep_config_from_json(Json{{"profile", "full"}});
    EXPECT_EQ(to_json(full), to_json(SweepConfig::full()));
    const SweepConfig c = sweep_config_from_json(
        Json{{"trials", 3}, {"methods", {"saddle"}}, {"geometry", {{"cell_px", 90.0}}}, {"aberrations", {{{"name", "c"}, {"w_coma", 2.0}}}}});
    EXPECT_EQ(c.trials, 3);
    ASSERT_EQ(c.methods.size(), 1u);
    EXPECT_EQ(c.methods[0], RefineMethod::saddle);
    EXPECT_EQ(c.geometry.cell_px, 90.0);
    EXPECT_EQ(c.geometry.supersample, SweepConfig::ci().geometry.supersample);
    ASSERT_EQ(c.aberrations.size(), 1u);
    EXPECT_EQ(c.aberrations[0].coeffs.w_coma, 2.0);
    EXPECT_EQ(c.phi_list, SweepConfig::ci().phi_list);
    EXPECT_EQ(to_json(sweep_config_from_json(to_json(c))), to_json(c));
}

TEST(ConfigJson, ErrorsNameTheField) {
    EXPECT_NE(config_error([] { pattern_spec_from_json(Json{{"grid_rows", "ten"}}); }).find("pattern.grid_rows"),
              std::string::npos);
    EXPECT_NE(config_error([] { pattern_spec_from_json(Json{{"gird_rows", 4}}); }).find("pattern.gird_rows"),
              std::string::npos);
    EXPECT_NE(config_error([] { sweep_config_from_json(Json{{"geometry", {{"psf", {{"pad_factor", "x"}}}}}}); })
                  .find("sweep.geometry.psf.pad_factor"),
              std::string::npos);
    EXPECT_NE(config_error([] { sweep_config_from_json(Json{{"methods", {"bogus"}}}); }).find("sweep.methods"),
              std::string::npos);
    EXPECT_NE(config_error([] { sweep_config_from_json(Json{{"profile", "huge"}}); }).find("sweep.profile"),
              std::string::npos);
    EXPECT_NE(config_error([] { sweep_config_from_json(Json{{"trials", 0}}); }), "");
    EXPECT_NE(config_error([] { refine_config_from_json(Json{{"half_window", 1}}); }), "");
}

TEST(ConfigJson, SweepResultAndGridRoundTrip) {
    SweepResult r;
    r.trials = 2;
    r.corners = 4;
    StabilityRecord rec;
    rec.aberration = "coma4";
    rec.coeffs.w_coma = 4.0;
    rec.sigma_n = 0.02;
    rec.method = RefineMethod::saddle;
    rec.pattern = PatternKind::checkerboard;
    rec.range_px = 0.25;
    rec.trial_ranges = {0.2, 0.3};
    rec.expected = 8;
    rec.estimates = 7;
    rec.failures = 1;
    rec.poses.push_back({10.0, 15.0, true, 4, 0, 0.01});
    r.records.push_back(rec);
    const SweepResult back = sweep_result_from_json(to_json(r));
    EXPECT_EQ(to_json(back), to_json(r));
    EXPECT_EQ(sweep_csv(back), sweep_csv(r));

    CornerGrid g;
    g.rows = 1;
    g.cols = 2;
    g.entries = {{{1.5, 2.5}, 1.0, 1.0, true, 0}, {{3.0, 4.0}, 2.0, 1.0, false, 1}};
    const CornerGrid g2 = corner_grid_from_json(to_json(g));
    EXPECT_EQ(to_json(g2), to_json(g));
}
