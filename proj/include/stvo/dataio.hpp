#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "stvo/camera.hpp"
#include "stvo/errors.hpp"
#include "stvo/evalkit.hpp"
#include "stvo/grid.hpp"
#include "stvo/se3.hpp"

namespace stvo {

namespace fs = std::filesystem;

namespace detail {

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

/// Netpbm-style header tokenizer: skips whitespace and '#' comments.
class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : b_(bytes) {}

  std::string token() {
    skip();
    std::size_t start = pos_;
    while (pos_ < b_.size() && !std::isspace(static_cast<unsigned char>(b_[pos_]))) ++pos_;
    if (start == pos_) throw ParseError("image header truncated");
    return b_.substr(start, pos_ - start);
  }

  long integer() {
    const std::string t = token();
    try {
      std::size_t used = 0;
      long v = std::stol(t, &used);
      if (used != t.size()) throw ParseError("");
      return v;
    } catch (const std::exception&) {
      throw ParseError("image header: expected an integer, got '" + t + "'");
    }
  }

  /// Consumes the single whitespace byte that ends a header.
  std::size_t payload_offset() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) {
      throw ParseError("image header: missing separator before pixel data");
    }
    return pos_ + 1;
  }

 private:
  void skip() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& b_;
  std::size_t pos_ = 0;
};

inline std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace detail

/// Decodes binary PGM ("P5") or PPM ("P6") with maxval <= 255, normalized to [0, 1].
inline ImageGrid decode_netpbm(const std::string& bytes) {
  detail::HeaderReader hr(bytes);
  const std::string magic = hr.token();
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw ParseError("netpbm: unsupported magic '" + magic + "'");
  const long w = hr.integer(), h = hr.integer(), maxval = hr.integer();
  if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16) throw ParseError("netpbm: bad dimensions");
  if (maxval <= 0 || maxval > 255) throw ParseError("netpbm: only 8-bit images are supported");
  const std::size_t off = hr.payload_offset();
  const std::size_t n = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() < off + n) throw ParseError("netpbm: pixel data truncated");
  ImageGrid g(static_cast<int>(h), static_cast<int>(w), channels, 0.0, ValueRange::kNormalized);
  auto v = g.values();
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = static_cast<unsigned char>(bytes[off + i]) / static_cast<double>(maxval);
  }
  return g;
}

/// Encodes a 1- or 3-channel grid of [0, 1] values as P5/P6 (clamped, rounded).
inline std::string encode_netpbm(const ImageGrid& g) {
  if (g.channels() != 1 && g.channels() != 3) {
    throw DimensionMismatchError("netpbm: only 1- or 3-channel grids can be saved");
  }
  require_finite(g, "netpbm");
  std::string out = (g.channels() == 1 ? "P5\n" : "P6\n") + std::to_string(g.width()) + " " +
                    std::to_string(g.height()) + "\n255\n";
  const std::size_t off = out.size();
  out.resize(off + g.size());
  auto v = g.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double q = std::round(std::clamp(v[i], 0.0, 1.0) * 255.0);
    out[off + i] = static_cast<char>(static_cast<unsigned char>(q));
  }
  return out;
}

inline ImageGrid load_image(const fs::path& path) { return decode_netpbm(detail::read_file(path)); }
inline void save_image(const fs::path& path, const ImageGrid& g) {
  detail::write_file(path, encode_netpbm(g));
}

/**
 * Decodes PFM ("Pf" grayscale, "PF" color). A negative scale means
 * little-endian data. Rows are stored bottom to top.
 */
inline ImageGrid decode_pfm(const std::string& bytes) {
  detail::HeaderReader hr(bytes);
  const std::string magic = hr.token();
  int channels = 0;
  if (magic == "Pf") channels = 1;
  else if (magic == "PF") channels = 3;
  else throw ParseError("pfm: unsupported magic '" + magic + "'");
  const long w = hr.integer(), h = hr.integer();
  if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16) throw ParseError("pfm: bad dimensions");
  const std::string scale_tok = hr.token();
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    throw ParseError("pfm: bad scale '" + scale_tok + "'");
  }
  if (scale == 0.0 || !std::isfinite(scale)) throw ParseError("pfm: scale must be non-zero");
  const bool little = scale < 0.0;
  const std::size_t off = hr.payload_offset();
  const std::size_t n = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() < off + 4 * n) throw ParseError("pfm: pixel data truncated");
  ImageGrid g(static_cast<int>(h), static_cast<int>(w), channels);
  const bool swap = little != (std::endian::native == std::endian::little);
  for (long row = 0; row < h; ++row) {
    const long y = h - 1 - row;
    for (long x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        const std::size_t src = off + 4 * ((static_cast<std::size_t>(row) * w + x) * channels + c);
        std::uint32_t raw;
        std::memcpy(&raw, bytes.data() + src, 4);
        if (swap) raw = detail::byteswap32(raw);
        const float f = std::bit_cast<float>(raw);
        if (!std::isfinite(f)) throw ParseError("pfm: non-finite value in payload");
        g(static_cast<int>(y), static_cast<int>(x), c) = f;
      }
  }
  return g;
}

/// Little-endian PFM; values are stored as 32-bit floats.
inline std::string encode_pfm(const ImageGrid& g) {
  if (g.channels() != 1 && g.channels() != 3) {
    throw DimensionMismatchError("pfm: only 1- or 3-channel grids can be saved");
  }
  require_finite(g, "pfm");
  std::string out = (g.channels() == 1 ? "Pf\n" : "PF\n") + std::to_string(g.width()) + " " +
                    std::to_string(g.height()) + "\n-1.0\n";
  const std::size_t off = out.size();
  out.resize(off + 4 * g.size());
  const bool swap = std::endian::native != std::endian::little;
  std::size_t k = 0;
  for (int y = g.height() - 1; y >= 0; --y)
    for (int x = 0; x < g.width(); ++x)
      for (int c = 0; c < g.channels(); ++c) {
        std::uint32_t raw = std::bit_cast<std::uint32_t>(static_cast<float>(g(y, x, c)));
        if (swap) raw = detail::byteswap32(raw);
        std::memcpy(out.data() + off + 4 * k++, &raw, 4);
      }
  return out;
}

inline ImageGrid load_pfm(const fs::path& path) { return decode_pfm(detail::read_file(path)); }
inline void save_pfm(const fs::path& path, const ImageGrid& g) { detail::write_file(path, encode_pfm(g)); }

/// Nearest rotation in the Frobenius sense.
inline Mat3 project_to_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

/**
 * Benchmark pose files: one camera-to-world 3x4 matrix per non-empty line,
 * 12 row-major numbers. Frame indices count non-empty lines from 0.
 * Rotations more than 1e-4 from orthonormal are rejected; the rest are
 * projected back onto SO(3).
 */
inline Trajectory parse_kitti_poses(std::istream& in) {
  Trajectory out;
  std::string line;
  std::size_t lineno = 0;
  int frame = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::vector<double> v;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw ParseError("");
      } catch (const std::exception&) {
        throw ParseError("pose file: bad number '" + tok + "'", lineno);
      }
    }
    if (v.size() != 12) {
      throw ParseError("pose file: expected 12 numbers, got " + std::to_string(v.size()), lineno);
    }
    for (double x : v)
      if (!std::isfinite(x)) throw ParseError("pose file: non-finite value", lineno);
    Mat3 r;
    Vec3 t;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) r(i, j) = v[4 * i + j];
      t[i] = v[4 * i + 3];
    }
    const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-4 || r.determinant() < 0.0) {
      throw ParseError("pose file: rotation is not orthonormal within 1e-4", lineno);
    }
    out.push_back(frame++, {project_to_rotation(r), t});
  }
  return out;
}

inline Trajectory load_kitti_poses(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pose file '" + path.string() + "'");
  return parse_kitti_poses(in);
}

inline std::string format_kitti_poses(const Trajectory& t) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& p : t) {
    const Mat3& r = p.pose.rotation;
    const Vec3& tr = p.pose.translation;
    for (int i = 0; i < 3; ++i) {
      os << r(i, 0) << ' ' << r(i, 1) << ' ' << r(i, 2) << ' ' << tr[i] << (i == 2 ? '\n' : ' ');
    }
  }
  return os.str();
}

inline void save_kitti_poses(const fs::path& path, const Trajectory& t) {
  detail::write_file(path, format_kitti_poses(t));
}

/// Pinhole intrinsics of the left camera plus the stereo baseline in meters.
struct StereoCalibration {
  Intrinsics intrinsics;
  double baseline = 0.0;

  void validate() const {
    intrinsics.validate();
    if (!(baseline > 0.0) || !std::isfinite(baseline)) throw DomainError("calibration: baseline must be positive");
  }

  /// Left -> right transform for a right camera displaced +baseline along x.
  SE3Transform stereo_transform() const { return SE3Transform::from_translation({-baseline, 0.0, 0.0}); }
};

/// Parses `key=value` lines; blank lines and '#' comments are ignored.
inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", lineno);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

/**
 * Reads either the flat `fx= fy= cx= cy= baseline=` format or benchmark
 * projection-matrix lines (`P0: ...`, `P1: ...`), from which
 * fx = P0[0], fy = P0[5], cx = P0[2], cy = P0[6], baseline = -P1[3] / P1[0].
 */
inline StereoCalibration parse_calibration(const std::string& text) {
  StereoCalibration cal;
  if (text.find("P0:") != std::string::npos) {
    std::map<std::string, std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      std::istringstream ls(line.substr(colon + 1));
      std::vector<double> v;
      double x;
      while (ls >> x) v.push_back(x);
      if (!ls.eof()) throw ParseError("calibration: bad number", lineno);
      rows[line.substr(0, colon)] = v;
    }
    const auto p0 = rows.find("P0"), p1 = rows.find("P1");
    if (p0 == rows.end() || p1 == rows.end() || p0->second.size() != 12 || p1->second.size() != 12) {
      throw ParseError("calibration: P0 and P1 need 12 values each");
    }
    const auto& a = p0->second;
    const auto& b = p1->second;
    cal.intrinsics = {a[0], a[5], a[2], a[6]};
    cal.baseline = -b[3] / b[0];
  } else {
    std::istringstream in(text);
    const auto kv = parse_key_values(in);
    auto get = [&](const char* key) {
      const auto it = kv.find(key);
      if (it == kv.end()) throw ParseError(std::string("calibration: missing key '") + key + "'");
      try {
        return std::stod(it->second);
      } catch (const std::exception&) {
        throw ParseError(std::string("calibration: bad value for '") + key + "'");
      }
    };
    cal.intrinsics = {get("fx"), get("fy"), get("cx"), get("cy")};
    cal.baseline = get("baseline");
  }
  try {
    cal.validate();
  } catch (const DomainError& e) {
    throw ParseError(e.what());
  }
  return cal;
}

inline StereoCalibration load_calibration(const fs::path& path) {
  return parse_calibration(detail::read_file(path));
}

inline std::string format_calibration(const StereoCalibration& c) {
  std::ostringstream os;
  os << std::setprecision(17) << "fx=" << c.intrinsics.fx << "\nfy=" << c.intrinsics.fy
     << "\ncx=" << c.intrinsics.cx << "\ncy=" << c.intrinsics.cy << "\nbaseline=" << c.baseline
     << '\n';
  return os.str();
}

/// One time step of a stereo sequence.
struct StereoFrame {
  int index = 0;
  ImageGrid left;
  std::optional<ImageGrid> right;
  /// Left-camera depth in meters.
  std::optional<ImageGrid> depth;
  /// Left camera-to-world.
  std::optional<SE3Transform> pose;
};

struct StereoSequence {
  std::vector<StereoFrame> frames;
  StereoCalibration calibration;
  std::map<std::string, std::string> manifest;
};

/// Files of a sequence directory: image_left/, image_right/, calib.txt,
/// optional poses.txt and depth/NNNNNN.pfm.
struct SequenceManifest {
  fs::path root;
  std::vector<fs::path> left;
  /// Empty path where the right image is missing.
  std::vector<fs::path> right;
  std::vector<fs::path> depth;
  StereoCalibration calibration;
  std::optional<fs::path> poses;
  std::size_t frame_count = 0;
};

inline std::string frame_name(int index) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << index;
  return os.str();
}

inline SequenceManifest scan_sequence(const fs::path& root) {
  SequenceManifest m;
  m.root = root;
  const fs::path left_dir = root / "image_left";
  if (!fs::is_directory(left_dir)) throw IoError("sequence: missing directory '" + left_dir.string() + "'");
  std::vector<fs::path> lefts;
  for (const auto& e : fs::directory_iterator(left_dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) lefts.push_back(e.path());
  }
  std::sort(lefts.begin(), lefts.end());
  for (const auto& l : lefts) {
    m.left.push_back(l);
    const fs::path r = root / "image_right" / l.filename();
    m.right.push_back(fs::exists(r) ? r : fs::path());
    const fs::path d = root / "depth" / (l.stem().string() + ".pfm");
    m.depth.push_back(fs::exists(d) ? d : fs::path());
  }
  m.frame_count = m.left.size();
  m.calibration = load_calibration(root / "calib.txt");
  if (fs::exists(root / "poses.txt")) m.poses = root / "poses.txt";
  return m;
}

inline StereoSequence load_sequence(const fs::path& root) {
  const SequenceManifest m = scan_sequence(root);
  StereoSequence seq;
  seq.calibration = m.calibration;
  std::optional<Trajectory> poses;
  if (m.poses) poses = load_kitti_poses(*m.poses);
  for (std::size_t i = 0; i < m.frame_count; ++i) {
    StereoFrame f;
    try {
      f.index = std::stoi(m.left[i].stem().string());
    } catch (const std::exception&) {
      f.index = static_cast<int>(i);
    }
    f.left = load_image(m.left[i]);
    if (!m.right[i].empty()) f.right = load_image(m.right[i]);
    if (!m.depth[i].empty()) f.depth = load_pfm(m.depth[i]);
    if (poses && i < poses->size()) f.pose = (*poses)[i].pose;
    seq.frames.push_back(std::move(f));
  }
  if (fs::exists(root / "manifest.txt")) {
    std::ifstream in(root / "manifest.txt");
    seq.manifest = parse_key_values(in);
  }
  return seq;
}

/// Writes the directory layout read by load_sequence.
inline void write_sequence(const fs::path& root, const StereoSequence& seq) {
  fs::create_directories(root / "image_left");
  fs::create_directories(root / "image_right");
  bool any_depth = false, all_poses = !seq.frames.empty();
  for (const auto& f : seq.frames) {
    any_depth |= f.depth.has_value();
    all_poses &= f.pose.has_value();
  }
  if (any_depth) fs::create_directories(root / "depth");
  Trajectory traj;
  for (const auto& f : seq.frames) {
    const std::string ext = f.left.channels() == 1 ? ".pgm" : ".ppm";
    save_image(root / "image_left" / (frame_name(f.index) + ext), f.left);
    if (f.right) save_image(root / "image_right" / (frame_name(f.index) + ext), *f.right);
    if (f.depth) save_pfm(root / "depth" / (frame_name(f.index) + ".pfm"), *f.depth);
    if (all_poses) traj.push_back(f.index, *f.pose);
  }
  detail::write_file(root / "calib.txt", format_calibration(seq.calibration));
  if (all_poses) save_kitti_poses(root / "poses.txt", traj);
  std::string manifest = "frames=" + std::to_string(seq.frames.size()) + "\n";
  for (const auto& [k, v] : seq.manifest) manifest += k + "=" + v + "\n";
  detail::write_file(root / "manifest.txt", manifest);
}

}  // namespace stvo
