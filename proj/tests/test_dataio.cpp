#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <random>
#include <sstream>

#include "stvo/assemble.hpp"
#include "stvo/dataio.hpp"

using namespace stvo;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stvo_test_dataio_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ImageGrid random_grid(int h, int w, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  ImageGrid g(h, w, c);
  for (double& v : g.values()) v = u(rng);
  return g;
}

}  // namespace

TEST(Netpbm, P5Normalization) {
  std::string bytes = "P5\n2 2\n255\n";
  bytes += std::string{'\x00', '\x55', '\xaa', '\xff'};
  const ImageGrid g = decode_netpbm(bytes);
  ASSERT_EQ(g.channels(), 1);
  EXPECT_EQ(g(0, 0), 0.0);
  EXPECT_NEAR(g(0, 1), 1.0 / 3, 1e-12);
  EXPECT_NEAR(g(1, 0), 2.0 / 3, 1e-12);
  EXPECT_EQ(g(1, 1), 1.0);
}

TEST(Netpbm, HeaderComments) {
  std::string bytes = "P5 # gray\n# size next\n1 1 255\n";
  bytes += '\x80';
  EXPECT_NEAR(decode_netpbm(bytes)(0, 0), 128.0 / 255, 1e-12);
}

TEST(Netpbm, P6RoundTripQuantization) {
  const ImageGrid g = random_grid(5, 7, 3, 1);
  const ImageGrid back = decode_netpbm(encode_netpbm(g));
  ASSERT_TRUE(back.same_shape(g));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_LE(std::abs(back.values()[i] - g.values()[i]), 1.0 / 255);
  EXPECT_EQ(encode_netpbm(back), encode_netpbm(g));
}

TEST(Netpbm, Rejects) {
  EXPECT_THROW(decode_netpbm("P3\n1 1\n255\n0 0 0"), ParseError);
  EXPECT_THROW(decode_netpbm("P5\n4 4\n255\nab"), ParseError);
  EXPECT_THROW(decode_netpbm("P5\n1 1\n65535\nab"), ParseError);
  ImageGrid bad(1, 1, 1, std::nan(""));
  EXPECT_THROW(encode_netpbm(bad), NumericError);
  EXPECT_THROW(load_image("/nonexistent/stvo.ppm"), IoError);
}

TEST(Pfm, RoundTripIsBitExact) {
  for (int c : {1, 3}) {
    ImageGrid g = random_grid(4, 6, c, 2 + c, -100.0, 100.0);
    // Values representable as float survive exactly.
    for (double& v : g.values()) v = static_cast<float>(v);
    const ImageGrid back = decode_pfm(encode_pfm(g));
    EXPECT_EQ(back, g);
  }
}

TEST(Pfm, BottomUpRowsAndEndianness) {
  // 1x2 big-endian payload, rows stored bottom first.
  std::string bytes = "Pf\n1 2\n1.0\n";
  for (float f : {2.0f, 1.0f}) {
    std::uint32_t raw = std::bit_cast<std::uint32_t>(f);
    const unsigned char be[4] = {static_cast<unsigned char>(raw >> 24), static_cast<unsigned char>(raw >> 16),
                                 static_cast<unsigned char>(raw >> 8), static_cast<unsigned char>(raw)};
    bytes.append(reinterpret_cast<const char*>(be), 4);
  }
  const ImageGrid g = decode_pfm(bytes);
  EXPECT_EQ(g(0, 0), 1.0);
  EXPECT_EQ(g(1, 0), 2.0);
}

TEST(Pfm, RejectsNonFinite) {
  std::string bytes = "Pf\n1 1\n-1.0\n";
  const float nan = std::nanf("");
  char raw[4];
  std::memcpy(raw, &nan, 4);
  bytes.append(raw, 4);
  EXPECT_THROW(decode_pfm(bytes), ParseError);
  EXPECT_THROW(decode_pfm("Pf\n1 1\n0\nabcd"), ParseError);
  EXPECT_THROW(decode_pfm("Pf\n2 2\n-1\nabcd"), ParseError);
  EXPECT_THROW(encode_pfm(ImageGrid(1, 1, 1, INFINITY)), NumericError);
}

TEST(Poses, IdentityLine) {
  std::istringstream in("1 0 0 0 0 1 0 0 0 0 1 0\n");
  const Trajectory t = parse_kitti_poses(in);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].pose.matrix(), Mat4::Identity());
}

TEST(Poses, ForwardFixture) {
  std::istringstream in(
      "1 0 0 0 0 1 0 0 0 0 1 0\n"
      "1 0 0 0 0 1 0 0 0 0 1 1\n"
      "\n"
      "1 0 0 0 0 1 0 0 0 0 1 2\n");
  const Trajectory t = parse_kitti_poses(in);
  ASSERT_EQ(t.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(t.position(k), Vec3(0, 0, k));
    EXPECT_EQ(t[k].frame, k);
  }
}

TEST(Poses, RoundTrip) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  Trajectory t;
  for (int i = 0; i < 20; ++i) {
    t.push_back(i, twist_to_transform(Twist(Vec3(u(rng), u(rng), u(rng)), Vec3(u(rng), u(rng), u(rng)) * 50)));
  }
  const fs::path dir = scratch_dir("poses");
  save_kitti_poses(dir / "p.txt", t);
  const Trajectory back = load_kitti_poses(dir / "p.txt");
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_LT((back[i].pose.matrix() - t[i].pose.matrix()).norm(), 1e-9);
  fs::remove_all(dir);
}

TEST(Poses, Rejects) {
  for (const char* text : {"1 0 0 0 0 1 0 0 0 0 1\n", "1 0 0 0 0 1 0 0 0 0 1 nan\n", "1 0 0 0 0 1 0 0 0 0 1 x\n",
                           "2 0 0 0 0 1 0 0 0 0 1 0\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(parse_kitti_poses(in), ParseError) << text;
  }
}

TEST(Calibration, KeyValueAndProjectionFormats) {
  const StereoCalibration a = parse_calibration("fx=718.8\nfy=718.8\ncx=607.2\ncy=185.2\nbaseline=0.54\n");
  EXPECT_EQ(a.intrinsics.fx, 718.8);
  EXPECT_EQ(a.baseline, 0.54);
  const StereoCalibration b = parse_calibration(
      "P0: 718.8 0 607.2 0 0 718.8 185.2 0 0 0 1 0\n"
      "P1: 718.8 0 607.2 -388.152 0 718.8 185.2 0 0 0 1 0\n");
  EXPECT_EQ(b.intrinsics.cx, 607.2);
  EXPECT_EQ(b.intrinsics.cy, 185.2);
  EXPECT_NEAR(b.baseline, 0.54, 1e-12);
  const StereoCalibration c = parse_calibration(format_calibration(b));
  EXPECT_EQ(c.intrinsics.fx, b.intrinsics.fx);
  EXPECT_EQ(c.baseline, b.baseline);
  EXPECT_EQ(b.stereo_transform().translation, Vec3(-b.baseline, 0, 0));
}

TEST(Calibration, Rejects) {
  EXPECT_THROW(parse_calibration("fx=1\nfy=1\ncx=0\ncy=0\n"), ParseError);
  EXPECT_THROW(parse_calibration("fx=nan\nfy=1\ncx=0\ncy=0\nbaseline=1\n"), ParseError);
  EXPECT_THROW(parse_calibration("fx=1\nfy=1\ncx=0\ncy=0\nbaseline=-1\n"), ParseError);
  EXPECT_THROW(parse_calibration("fx 1\n"), ParseError);
  EXPECT_THROW(parse_calibration("P0: 1 0 0\nP1: 1\n"), ParseError);
}

TEST(Sequence, WriteLoadAndAssemble) {
  StereoSequence seq;
  seq.calibration = {{50, 50, 7.5, 5.5}, 0.3};
  for (int i = 0; i < 5; ++i) {
    StereoFrame f;
    f.index = i;
    f.left = decode_netpbm(encode_netpbm(random_grid(12, 16, 3, 10 + i)));
    f.right = decode_netpbm(encode_netpbm(random_grid(12, 16, 3, 20 + i)));
    ImageGrid d = random_grid(12, 16, 1, 30 + i, 2.0, 20.0);
    for (double& v : d.values()) v = static_cast<float>(v);
    f.depth = d;
    f.pose = SE3Transform::from_translation({0, 0, 1.0 * i});
    seq.frames.push_back(std::move(f));
  }
  seq.manifest["seed"] = "9";
  const fs::path dir = scratch_dir("seq");
  write_sequence(dir, seq);
  const StereoSequence back = load_sequence(dir);
  ASSERT_EQ(back.frames.size(), 5u);
  EXPECT_EQ(back.manifest.at("seed"), "9");
  EXPECT_EQ(back.manifest.at("frames"), "5");
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(back.frames[i].index, i);
    EXPECT_EQ(back.frames[i].left, seq.frames[i].left);
    EXPECT_EQ(*back.frames[i].right, *seq.frames[i].right);
    EXPECT_EQ(*back.frames[i].depth, *seq.frames[i].depth);
    EXPECT_EQ(back.frames[i].pose->translation, seq.frames[i].pose->translation);
  }

  const auto inst = assemble_instances(back);
  ASSERT_EQ(inst.size(), 4u);
  for (std::size_t k = 0; k < inst.size(); ++k) {
    EXPECT_EQ(inst[k].reference, seq.frames[k + 1].left);
    EXPECT_EQ(inst[k].temporal_live, seq.frames[k].left);
    EXPECT_EQ(inst[k].stereo_live, *seq.frames[k + 1].right);
    EXPECT_EQ(inst[k].intrinsics.fx, 50.0);
    EXPECT_EQ(inst[k].intrinsics.cy, 5.5);
    EXPECT_EQ(inst[k].stereo_transform.translation, Vec3(-0.3, 0, 0));
    EXPECT_EQ(inst[k].reference_frame, static_cast<int>(k + 1));
    // Reference is one meter ahead of the live camera.
    EXPECT_LT((inst[k].gt_temporal->translation - Vec3(0, 0, 1)).norm(), 1e-12);
  }

  // A missing right image drops its pair with a warning.
  fs::remove(dir / "image_right" / (frame_name(2) + ".ppm"));
  std::vector<std::string> warnings;
  const auto fewer = assemble_instances(load_sequence(dir), &warnings);
  EXPECT_EQ(fewer.size(), 3u);
  ASSERT_EQ(warnings.size(), 1u);
  fs::remove_all(dir);
}

TEST(Sequence, Errors) {
  EXPECT_THROW(load_sequence("/nonexistent/stvo_seq"), IoError);
  StereoSequence one;
  one.calibration = {{1, 1, 0, 0}, 1};
  one.frames.resize(1);
  EXPECT_THROW(assemble_instances(one), DegenerateInputError);
}
