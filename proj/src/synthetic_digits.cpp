#include "bfa/synthetic_digits.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace bfa {

namespace {

constexpr std::size_t kSide = 28;

struct Point {
  double x, y;
};
using Stroke = std::vector<Point>;

Stroke ellipse(double cx, double cy, double rx, double ry, double start = 0.0, double sweep = 2 * std::numbers::pi,
               int steps = 20) {
  Stroke s;
  for (int i = 0; i <= steps; ++i) {
    const double t = start + sweep * i / steps;
    s.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return s;
}

// Skeletons in a unit box, y pointing down.
std::vector<Stroke> skeleton(int digit) {
  switch (digit) {
    case 0: return {ellipse(0.5, 0.5, 0.28, 0.4)};
    case 1: return {{{0.35, 0.25}, {0.52, 0.1}, {0.52, 0.9}}};
    case 2: return {{{0.25, 0.3}, {0.33, 0.15}, {0.5, 0.1}, {0.67, 0.15}, {0.74, 0.3}, {0.68, 0.47},
                     {0.25, 0.9}, {0.78, 0.9}}};
    case 3: return {{{0.25, 0.14}, {0.72, 0.14}, {0.45, 0.45}, {0.68, 0.53}, {0.74, 0.72}, {0.6, 0.88},
                     {0.4, 0.9}, {0.24, 0.82}}};
    case 4: return {{{0.62, 0.9}, {0.62, 0.1}, {0.2, 0.64}, {0.82, 0.64}}};
    case 5: return {{{0.75, 0.1}, {0.32, 0.1}, {0.28, 0.45}, {0.52, 0.4}, {0.7, 0.5}, {0.74, 0.7},
                     {0.6, 0.88}, {0.4, 0.9}, {0.24, 0.82}}};
    case 6: return {{{0.68, 0.1}, {0.45, 0.22}, {0.31, 0.45}, {0.28, 0.7}}, ellipse(0.5, 0.7, 0.22, 0.19)};
    case 7: return {{{0.22, 0.12}, {0.78, 0.12}, {0.42, 0.9}}};
    case 8: return {ellipse(0.5, 0.29, 0.2, 0.18), ellipse(0.5, 0.7, 0.25, 0.2)};
    case 9: return {ellipse(0.48, 0.32, 0.22, 0.2), {{0.7, 0.32}, {0.66, 0.6}, {0.56, 0.9}}};
    default: break;
  }
  return {};
}

double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double wx = p.x - a.x, wy = p.y - a.y;
  const double len2 = vx * vx + vy * vy;
  const double t = len2 > 0 ? std::clamp((wx * vx + wy * vy) / len2, 0.0, 1.0) : 0.0;
  const double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

void render_one(int digit, std::mt19937_64& rng, std::uint8_t* out) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  const double angle = range(-0.22, 0.22);
  const double sx = range(0.8, 1.1);
  const double sy = range(0.82, 1.08);
  const double shear = range(-0.28, 0.28);
  const double tx = range(-0.08, 0.08);
  const double ty = range(-0.06, 0.06);
  const double half_width = range(0.85, 1.75);
  const double ink = range(0.75, 1.0);
  const double c = std::cos(angle), s = std::sin(angle);

  std::vector<Stroke> strokes = skeleton(digit);
  for (Stroke& stroke : strokes) {
    for (Point& p : stroke) {
      const double jx = p.x + range(-0.035, 0.035) - 0.5;
      const double jy = p.y + range(-0.035, 0.035) - 0.5;
      const double ax = sx * (jx + shear * jy);
      const double ay = sy * jy;
      const double rx = c * ax - s * ay + 0.5 + tx;
      const double ry = s * ax + c * ay + 0.5 + ty;
      p = {4.0 + 20.0 * rx, 4.0 + 20.0 * ry};
    }
  }

  std::normal_distribution<double> noise(0.0, 0.04);
  for (std::size_t y = 0; y < kSide; ++y) {
    for (std::size_t x = 0; x < kSide; ++x) {
      const Point p{static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5};
      double d = 1e9;
      for (const Stroke& stroke : strokes) {
        for (std::size_t i = 0; i + 1 < stroke.size(); ++i) d = std::min(d, segment_distance(p, stroke[i], stroke[i + 1]));
      }
      const double v = std::clamp(ink * std::clamp(half_width + 0.5 - d, 0.0, 1.0) + noise(rng), 0.0, 1.0);
      out[y * kSide + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
}

}  // namespace

DigitImages render_digits(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DigitImages images;
  images.count = count;
  images.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) images.labels[i] = static_cast<std::uint8_t>(i % 10);
  std::shuffle(images.labels.begin(), images.labels.end(), rng);
  images.pixels.resize(count * kSide * kSide);
  for (std::size_t i = 0; i < count; ++i) render_one(images.labels[i], rng, images.pixels.data() + i * kSide * kSide);
  return images;
}

Dataset synthetic_digits(std::size_t count, std::uint64_t seed) {
  const DigitImages raw = render_digits(count, seed);
  std::vector<double> pixels(raw.pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<double>(raw.pixels[i]) / 255.0;
  std::vector<int> labels(raw.labels.begin(), raw.labels.end());
  return Dataset(Tensor({count, kSide, kSide}, std::move(pixels)), std::move(labels), 10);
}

}  // namespace bfa
