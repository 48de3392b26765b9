#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "retinex/color.hpp"
#include "retinex/image_io.hpp"
#include "test_support.hpp"

namespace retinex {
namespace {

using testing::Rng;

TEST(ImagePlane, RejectsMismatchedDataLength) {
    EXPECT_THROW(ImagePlane(2, 3, std::vector<double>(5)), ShapeError);
    EXPECT_NO_THROW(ImagePlane(2, 3, std::vector<double>(6)));
}

TEST(ImagePlane, ValidateFlagsNonFiniteAndOutOfRange) {
    ImagePlane p(2, 2, 0.5);
    EXPECT_NO_THROW(validate_plane(p, true, "p"));
    p[3] = std::nan("");
    EXPECT_THROW(validate_plane(p, false, "p"), InvariantError);
    p[3] = 1.5;
    EXPECT_NO_THROW(validate_plane(p, false, "p"));
    EXPECT_THROW(validate_plane(p, true, "p"), InvariantError);
}

TEST(Lattice, PhotometricInverseIsAnInvolutionOnTheLattice) {
    Rng rng(11);
    const ColorImage img = testing::random_color(rng, 9, 7);
    const ColorImage twice = photometric_invert(photometric_invert(img));
    EXPECT_EQ(twice, snap_to_lattice(img));
    for (std::size_t i = 0; i < img.values().size(); ++i) {
        EXPECT_LE(std::abs(twice.values()[i] - img.values()[i]), 0x1p-54);
    }
}

// ---------------------------------------------------------------- HSV

TEST(Hsv, GrayPixelHasZeroHueAndSaturation) {
    ColorImage img(1, 1, 0.5);
    const auto hsv = rgb_to_hsv(img);
    EXPECT_EQ(hsv.hue[0], 0.0);
    EXPECT_EQ(hsv.saturation[0], 0.0);
    EXPECT_EQ(hsv.value[0], 0.5);
}

TEST(Hsv, PureRed) {
    ColorImage img(1, 1);
    img.at(0, 0, 0) = 1.0;
    const auto hsv = rgb_to_hsv(img);
    EXPECT_EQ(hsv.hue[0], 0.0);
    EXPECT_EQ(hsv.saturation[0], 1.0);
    EXPECT_EQ(hsv.value[0], 1.0);
}

TEST(Hsv, MatchesScalarReferenceOnRandomPixels) {
    Rng rng(3);
    const ColorImage img = testing::random_color(rng, 100, 100);
    const auto hsv = rgb_to_hsv(img);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const auto* px = &img.values()[3 * i];
        const auto ref = testing::reference_hsv(px[0], px[1], px[2]);
        EXPECT_NEAR(hsv.hue[i], ref.h_deg / 360.0, 1e-6);
        EXPECT_NEAR(hsv.saturation[i], ref.s, 1e-6);
        EXPECT_NEAR(hsv.value[i], ref.v, 1e-6);
        ASSERT_GE(hsv.hue[i], 0.0);
        ASSERT_LT(hsv.hue[i], 1.0);
    }
}

TEST(Hsv, ValueIsExactChannelMax) {
    Rng rng(5);
    const ColorImage img = testing::random_color(rng, 100, 100);
    const auto hsv = rgb_to_hsv(img);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const auto* px = &img.values()[3 * i];
        ASSERT_EQ(hsv.value[i], std::max({px[0], px[1], px[2]}));
    }
}

TEST(Hsv, RoundTripOnTenThousandPixels) {
    Rng rng(7);
    const ColorImage img = testing::random_color(rng, 100, 100);
    const ColorImage back = hsv_to_rgb(rgb_to_hsv(img));
    for (std::size_t i = 0; i < img.values().size(); ++i) {
        ASSERT_NEAR(back.values()[i], img.values()[i], 1e-6);
    }
}

TEST(Hsv, ZeroSaturationGivesGray) {
    Rng rng(9);
    const ImagePlane h = testing::random_plane(rng, 4, 4, 0.0, 0.999);
    const ImagePlane v = testing::random_plane(rng, 4, 4);
    const ColorImage rgb = hsv_to_rgb(h, ImagePlane(4, 4, 0.0), v);
    for (std::size_t i = 0; i < v.size(); ++i) {
        EXPECT_EQ(rgb.values()[3 * i], v[i]);
        EXPECT_EQ(rgb.values()[3 * i + 1], v[i]);
        EXPECT_EQ(rgb.values()[3 * i + 2], v[i]);
    }
}

TEST(Hsv, ZeroValueGivesBlack) {
    Rng rng(10);
    const ImagePlane h = testing::random_plane(rng, 4, 4, 0.0, 0.999);
    const ImagePlane s = testing::random_plane(rng, 4, 4);
    const ColorImage rgb = hsv_to_rgb(h, s, ImagePlane(4, 4, 0.0));
    for (double x : rgb.values()) EXPECT_EQ(x, 0.0);
}

TEST(Hsv, ShapeMismatchThrows) {
    EXPECT_THROW(hsv_to_rgb(ImagePlane(2, 2), ImagePlane(2, 3), ImagePlane(2, 2)), ShapeError);
}

// ---------------------------------------------------------------- quantization and files

TEST(Quantize, RoundHalfUpAndClamp) {
    EXPECT_EQ(quantize_byte(1.0), 255);
    EXPECT_EQ(quantize_byte(0.5), 128);
    EXPECT_EQ(quantize_byte(-0.001), 0);
    EXPECT_EQ(quantize_byte(1.2), 255);
    for (int b = 0; b < 256; ++b) EXPECT_EQ(quantize_byte(byte_to_unit(static_cast<std::uint8_t>(b))), b);
}

TEST(ImageIo, LoadsPpmWithExactByteScaling) {
    testing::TempDir dir("io");
    const auto path = dir / "tiny.ppm";
    testing::write_bytes(path, testing::make_ppm(2, 2, {0, 0, 0, 255, 255, 255, 128, 128, 128, 64, 64, 64}));
    const ColorImage img = load_image(path);
    ASSERT_EQ(img.height(), 2u);
    ASSERT_EQ(img.width(), 2u);
    EXPECT_EQ(img.at(0, 0, 0), 0.0);
    EXPECT_EQ(img.at(0, 1, 1), 1.0);
    EXPECT_EQ(img.at(1, 0, 2), 128.0 / 255.0);
    EXPECT_EQ(img.at(1, 1, 0), 64.0 / 255.0);
}

TEST(ImageIo, PpmRoundTripIsByteIdentical) {
    testing::TempDir dir("io");
    Rng rng(21);
    std::uniform_int_distribution<int> byte(0, 255), dim(1, 17);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t w = static_cast<std::size_t>(dim(rng)), h = static_cast<std::size_t>(dim(rng));
        std::vector<std::uint8_t> rgb(w * h * 3);
        for (auto& b : rgb) b = static_cast<std::uint8_t>(byte(rng));
        const auto original = testing::make_ppm(w, h, rgb);
        const auto in = dir / "in.ppm", out = dir / "out.ppm";
        testing::write_bytes(in, original);
        save_image(load_image(in), out);
        ASSERT_EQ(testing::read_bytes(out), original) << "trial " << trial;
    }
}

TEST(ImageIo, PngRoundTripPreservesPixels) {
    testing::TempDir dir("io");
    ColorImage img(1, 1);
    img.at(0, 0, 0) = 1.0;
    save_image(img, dir / "red.png");
    const ColorImage back = load_image(dir / "red.png");
    ASSERT_EQ(back.height(), 1u);
    EXPECT_EQ(back.at(0, 0, 0), 1.0);
    EXPECT_EQ(back.at(0, 0, 1), 0.0);
    EXPECT_EQ(back.at(0, 0, 2), 0.0);

    Rng rng(4);
    std::uniform_int_distribution<int> byte(0, 255);
    ColorImage big(13, 29);
    for (double& v : big.values()) v = byte_to_unit(static_cast<std::uint8_t>(byte(rng)));
    save_image(big, dir / "big.png");
    EXPECT_EQ(load_image(dir / "big.png"), big);
}

TEST(ImageIo, DistinctErrorsForMissingUnsupportedAndCorrupt) {
    testing::TempDir dir("io");
    EXPECT_THROW(load_image(dir / "missing.ppm"), IoError);

    testing::write_bytes(dir / "ascii.ppm", {'P', '3', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n'});
    EXPECT_THROW(load_image(dir / "ascii.ppm"), UnsupportedFormatError);

    testing::write_bytes(dir / "deep.ppm", {'P', '6', '\n', '1', ' ', '1', '\n', '6', '5', '5', '3', '5', '\n', 0, 0, 0, 0, 0, 0});
    EXPECT_THROW(load_image(dir / "deep.ppm"), UnsupportedFormatError);

    testing::write_bytes(dir / "text.ppm", {'h', 'e', 'l', 'l', 'o'});
    EXPECT_THROW(load_image(dir / "text.ppm"), UnsupportedFormatError);

    testing::write_bytes(dir / "badheader.ppm", {'P', '6', '\n', 'x', ' ', '1', '\n'});
    EXPECT_THROW(load_image(dir / "badheader.ppm"), CorruptFileError);

    testing::write_bytes(dir / "short.ppm", testing::make_ppm(4, 4, std::vector<std::uint8_t>(10, 0)));
    EXPECT_THROW(load_image(dir / "short.ppm"), CorruptFileError);

    auto png = std::vector<std::uint8_t>{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n', 0, 0, 0};
    testing::write_bytes(dir / "trunc.png", png);
    EXPECT_THROW(load_image(dir / "trunc.png"), CorruptFileError);
}

TEST(ImageIo, SaveRejectsUnknownExtensionAndUnwritablePath) {
    testing::TempDir dir("io");
    const ColorImage img(2, 2, 0.5);
    EXPECT_THROW(save_image(img, dir / "x.bmp"), UnsupportedFormatError);
    EXPECT_THROW(save_image(img, dir / "no" / "such" / "dir.ppm"), IoError);
}

TEST(ImageIo, RejectsPngWithAlpha) {
    // 1x1 RGBA PNG written with libpng directly.
    testing::TempDir dir("io");
    const auto path = dir / "rgba.png";
    FILE* fp = std::fopen(path.c_str(), "wb");
    ASSERT_NE(fp, nullptr);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_init_io(png, fp);
    png_set_IHDR(png, info, 1, 1, 8, PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_byte row[4] = {10, 20, 30, 255};
    png_write_row(png, row);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    EXPECT_THROW(load_image(path), UnsupportedFormatError);
}

}  // namespace
}  // namespace retinex
