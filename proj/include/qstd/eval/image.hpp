// Minimal RGB raster: PPM output, colour map, mesh heatmap snapshots and
// line plots.
#pragma once

#include "qstd/eval/metrics.hpp"
#include "qstd/mesh/mesh.hpp"

#include <array>
#include <limits>

namespace qstd::eval {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image(int w, int h, std::array<std::uint8_t, 3> fill = {255, 255, 255})
      : width(w), height(h), rgb(static_cast<std::size_t>(w * h * 3)) {
    for (std::size_t i = 0; i < rgb.size(); i += 3) std::copy(fill.begin(), fill.end(), rgb.begin() + static_cast<long>(i));
  }

  void set(int x, int y, std::array<std::uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const auto i = static_cast<std::size_t>((y * width + x) * 3);
    rgb[i] = c[0];
    rgb[i + 1] = c[1];
    rgb[i + 2] = c[2];
  }
};

/// Binary PPM (P6).
inline void write_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
}

/// Blue -> cyan -> green -> yellow -> red for t in [0, 1].
inline std::array<std::uint8_t, 3> colormap(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double r = std::clamp(1.5 - std::abs(4.0 * t - 3.0), 0.0, 1.0);
  const double g = std::clamp(1.5 - std::abs(4.0 * t - 2.0), 0.0, 1.0);
  const double b = std::clamp(1.5 - std::abs(4.0 * t - 1.0), 0.0, 1.0);
  return {static_cast<std::uint8_t>(std::lround(255 * r)), static_cast<std::uint8_t>(std::lround(255 * g)),
          static_cast<std::uint8_t>(std::lround(255 * b))};
}

/// Front view (x right, y up, camera on +z) of the mesh coloured by a
/// per-vertex scalar, z-buffered with interpolated values.
inline Image render_scalar_field(const mesh::TriangleMesh& m, const Eigen::VectorXd& values, int size = 256) {
  require_shape(values.size() == m.vertex_count(), "render_scalar_field: one value per vertex required");
  Image img(size, size);
  const Mat& p = m.vertices;
  const double lo = values.minCoeff(), hi = values.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  const Eigen::Vector2d mn(p.col(0).minCoeff(), p.col(1).minCoeff());
  const Eigen::Vector2d mx(p.col(0).maxCoeff(), p.col(1).maxCoeff());
  const double extent = std::max({mx.x() - mn.x(), mx.y() - mn.y(), 1e-12});
  const double margin = 0.05 * size;
  const double s = (size - 2 * margin) / extent;
  auto project = [&](int v) {
    return Eigen::Vector3d(margin + (p(v, 0) - mn.x()) * s, size - 1 - margin - (p(v, 1) - mn.y()) * s, p(v, 2));
  };
  std::vector<double> depth(static_cast<std::size_t>(size * size), -std::numeric_limits<double>::infinity());
  for (const auto& f : m.faces) {
    const Eigen::Vector3d a = project(f[0]), b = project(f[1]), c = project(f[2]);
    const double area = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
    if (std::abs(area) < 1e-12) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}))));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}))));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        const double w0 = ((b.x() - px) * (c.y() - py) - (c.x() - px) * (b.y() - py)) / area;
        const double w1 = ((c.x() - px) * (a.y() - py) - (a.x() - px) * (c.y() - py)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double z = w0 * a.z() + w1 * b.z() + w2 * c.z();
        auto& d = depth[static_cast<std::size_t>(y * size + x)];
        if (z <= d) continue;
        d = z;
        const double val = w0 * values(f[0]) + w1 * values(f[1]) + w2 * values(f[2]);
        img.set(x, y, colormap((val - lo) / span));
      }
    }
  }
  return img;
}

/// Per-vertex scalar field as plaintext, one value per line.
inline void write_scalar_field(const std::string& path, const Eigen::VectorXd& values) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  for (Index i = 0; i < values.size(); ++i) out << values(i) << '\n';
}

inline Eigen::VectorXd read_scalar_field(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<double> v;
  double x = 0.0;
  while (in >> x) v.push_back(x);
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

struct Heatmap {
  Eigen::VectorXd values;
  Image image;
};

/// Motion std field drawn on the template mesh.
inline Heatmap motion_std_heatmap(const MotionSequence& seq, const mesh::TriangleMesh& face, int size = 256) {
  if (seq.vertices() != face.vertex_count()) {
    throw ShapeError("heatmap: motion has " + std::to_string(seq.vertices()) + " vertices, mesh has " +
                     std::to_string(face.vertex_count()));
  }
  Eigen::VectorXd values = motion_std_field(seq);
  Image img = render_scalar_field(face, values, size);
  return {std::move(values), std::move(img)};
}

inline void draw_line(Image& img, double x0, double y0, double x1, double y1, std::array<std::uint8_t, 3> c) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    img.set(static_cast<int>(std::lround(x0 + t * (x1 - x0))), static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
  }
}

/// Line plot of several series on shared axes (log-scaled y when all values
/// are positive and `log_y`).
inline Image line_plot(const std::vector<std::vector<double>>& series, bool log_y = false, int width = 480,
                       int height = 320) {
  Image img(width, height);
  const double left = 40, right = width - 10.0, top = 10, bottom = height - 30.0;
  draw_line(img, left, bottom, right, bottom, {0, 0, 0});
  draw_line(img, left, top, left, bottom, {0, 0, 0});
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t longest = 0;
  bool positive = true;
  for (const auto& s : series) {
    longest = std::max(longest, s.size());
    for (double v : s) {
      if (!std::isfinite(v)) continue;
      positive = positive && v > 0;
    }
  }
  const bool use_log = log_y && positive;
  auto tf = [&](double v) { return use_log ? std::log10(v) : v; };
  for (const auto& s : series) {
    for (double v : s) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, tf(v));
      hi = std::max(hi, tf(v));
    }
  }
  if (longest == 0 || !std::isfinite(lo)) return img;
  if (hi <= lo) hi = lo + 1.0;
  static const std::array<std::array<std::uint8_t, 3>, 5> palette{
      {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14}, {148, 103, 189}}};
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    auto px = [&](std::size_t i) {
      return left + (right - left) * (longest > 1 ? static_cast<double>(i) / (longest - 1) : 0.5);
    };
    auto py = [&](double v) { return bottom - (bottom - top) * (tf(v) - lo) / (hi - lo); };
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      if (!std::isfinite(s[i]) || !std::isfinite(s[i + 1])) continue;
      draw_line(img, px(i), py(s[i]), px(i + 1), py(s[i + 1]), palette[k % palette.size()]);
    }
    if (s.size() == 1 && std::isfinite(s[0])) img.set(static_cast<int>(px(0)), static_cast<int>(py(s[0])), palette[k % palette.size()]);
  }
  return img;
}

/// Vertical bars, one per value.
inline Image bar_plot(const std::vector<double>& values, int width = 480, int height = 320) {
  Image img(width, height);
  const double left = 40, right = width - 10.0, top = 10, bottom = height - 30.0;
  draw_line(img, left, bottom, right, bottom, {0, 0, 0});
  double hi = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) hi = std::max(hi, v);
  }
  if (values.empty() || hi <= 0) return img;
  const double slot = (right - left) / static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || values[i] <= 0) continue;
    const int x0 = static_cast<int>(left + slot * (static_cast<double>(i) + 0.15));
    const int x1 = static_cast<int>(left + slot * (static_cast<double>(i) + 0.85));
    const int y0 = static_cast<int>(bottom - (bottom - top) * values[i] / hi);
    for (int y = y0; y < static_cast<int>(bottom); ++y) {
      for (int x = x0; x <= x1; ++x) img.set(x, y, {31, 119, 180});
    }
  }
  return img;
}

}  // namespace qstd::eval
