// Copyright 2026 The madaug Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "madaug/augops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace madaug {
namespace {

thread_local std::uint64_t g_apply_count = 0;

constexpr std::array<std::pair<OpKind, std::string_view>, 18> kNames = {{
    {OpKind::ShearX, "ShearX"},
    {OpKind::ShearY, "ShearY"},
    {OpKind::TranslateX, "TranslateX"},
    {OpKind::TranslateY, "TranslateY"},
    {OpKind::Rotate, "Rotate"},
    {OpKind::AutoContrast, "AutoContrast"},
    {OpKind::Invert, "Invert"},
    {OpKind::Equalize, "Equalize"},
    {OpKind::Solarize, "Solarize"},
    {OpKind::Posterize, "Posterize"},
    {OpKind::Contrast, "Contrast"},
    {OpKind::Color, "Color"},
    {OpKind::Brightness, "Brightness"},
    {OpKind::Sharpness, "Sharpness"},
    {OpKind::Cutout, "Cutout"},
    {OpKind::Flip, "Flip"},
    {OpKind::SamplePairing, "SamplePairing"},
    {OpKind::Identity, "Identity"},
}};

// Luma weights used by Color and Contrast on RGB input.
constexpr std::array<double, 3> kLuma = {0.299, 0.587, 0.114};

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Output pixel (x, y) samples the input at (ax*x + bx*y + cx, ay*x + by*y + cy).
struct AffineMap {
  double ax, bx, cx;
  double ay, by, cy;
};

AffineMap geometric_map(OpKind kind, double param, int height, int width) {
  const double mx = 0.5 * (width - 1);
  const double my = 0.5 * (height - 1);
  const double scale = width / kReferenceSize;
  switch (kind) {
    case OpKind::ShearX:
      return {1.0, param, -param * my, 0.0, 1.0, 0.0};
    case OpKind::ShearY:
      return {1.0, 0.0, 0.0, param, 1.0, -param * mx};
    case OpKind::TranslateX:
      return {1.0, 0.0, -param * scale, 0.0, 1.0, 0.0};
    case OpKind::TranslateY:
      return {1.0, 0.0, 0.0, 0.0, 1.0, -param * (height / kReferenceSize)};
    case OpKind::Rotate: {
      // Inverse rotation about the image centre.
      const double rad = param * M_PI / 180.0;
      const double c = std::cos(rad), s = std::sin(rad);
      return {c, s, mx - c * mx - s * my, -s, c, my + s * mx - c * my};
    }
    default:
      return {1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
  }
}

// Bilinear taps for one source coordinate; out-of-image taps get weight 0.
struct Taps {
  std::array<Eigen::Index, 4> index;
  std::array<double, 4> weight;
};

Taps bilinear_taps(double sx, double sy, int height, int width) {
  Taps t{};
  const double fx0 = std::floor(sx), fy0 = std::floor(sy);
  const int x0 = int(fx0), y0 = int(fy0);
  const double fx = sx - fx0, fy = sy - fy0;
  const std::array<int, 4> xs = {x0, x0 + 1, x0, x0 + 1};
  const std::array<int, 4> ys = {y0, y0, y0 + 1, y0 + 1};
  const std::array<double, 4> ws = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  for (int k = 0; k < 4; ++k) {
    const bool inside = xs[k] >= 0 && xs[k] < width && ys[k] >= 0 && ys[k] < height;
    t.index[k] = inside ? Eigen::Index(ys[k]) * width + xs[k] : 0;
    t.weight[k] = inside ? ws[k] : 0.0;
  }
  return t;
}

Image warp(const Image& x, const AffineMap& m) {
  Image out(x.channels, x.height, x.width);
  const Eigen::Index plane = x.plane();
  const double* src = x.pixels.data();
  double* dst = out.pixels.data();
  for (int y = 0; y < x.height; ++y) {
    for (int col = 0; col < x.width; ++col) {
      const Taps t = bilinear_taps(m.ax * col + m.bx * y + m.cx, m.ay * col + m.by * y + m.cy, x.height, x.width);
      const Eigen::Index o = Eigen::Index(y) * x.width + col;
      for (int c = 0; c < x.channels; ++c) {
        const double* s = src + c * plane;
        dst[c * plane + o] = t.weight[0] * s[t.index[0]] + t.weight[1] * s[t.index[1]] + t.weight[2] * s[t.index[2]] +
                             t.weight[3] * s[t.index[3]];
      }
    }
  }
  return out;
}

Image warp_vjp(const Image& upstream, const AffineMap& m) {
  Image grad(upstream.channels, upstream.height, upstream.width);
  const Eigen::Index plane = upstream.plane();
  const double* u = upstream.pixels.data();
  double* g = grad.pixels.data();
  for (int y = 0; y < upstream.height; ++y) {
    for (int col = 0; col < upstream.width; ++col) {
      const Taps t =
          bilinear_taps(m.ax * col + m.bx * y + m.cx, m.ay * col + m.by * y + m.cy, upstream.height, upstream.width);
      const Eigen::Index o = Eigen::Index(y) * upstream.width + col;
      for (int c = 0; c < upstream.channels; ++c) {
        const double v = u[c * plane + o];
        double* gc = g + c * plane;
        for (int k = 0; k < 4; ++k) gc[t.index[k]] += t.weight[k] * v;
      }
    }
  }
  return grad;
}

bool is_geometric(OpKind kind) {
  return kind == OpKind::ShearX || kind == OpKind::ShearY || kind == OpKind::TranslateX ||
         kind == OpKind::TranslateY || kind == OpKind::Rotate;
}

int to_level(double v) { return int(clamp01(v) * 255.0 + 0.5); }

// Histogram-equalization lookup table on 8-bit levels; empty when the
// channel is left unchanged.
std::vector<int> equalize_lut(const Eigen::Ref<const Eigen::ArrayXd>& plane) {
  std::array<long, 256> hist{};
  for (Eigen::Index i = 0; i < plane.size(); ++i) ++hist[to_level(plane[i])];
  long total = 0, last = 0, nonzero = 0;
  for (long h : hist) {
    if (h > 0) {
      total += h;
      last = h;
      ++nonzero;
    }
  }
  if (nonzero <= 1) return {};
  const long step = (total - last) / 255;
  if (step == 0) return {};
  std::vector<int> lut(256);
  long n = step / 2;
  for (int i = 0; i < 256; ++i) {
    lut[i] = int(std::min<long>(255, n / step));
    n += hist[i];
  }
  return lut;
}

Eigen::ArrayXd luma_plane(const Image& x) {
  if (x.channels == 3) return kLuma[0] * x.channel(0) + kLuma[1] * x.channel(1) + kLuma[2] * x.channel(2);
  Eigen::ArrayXd g = Eigen::ArrayXd::Zero(x.plane());
  for (int c = 0; c < x.channels; ++c) g += x.channel(c);
  return g / double(x.channels);
}

double luma_weight(const Image& x, int c) { return x.channels == 3 ? kLuma[c] : 1.0 / x.channels; }

// PIL SMOOTH kernel, applied to interior pixels only.
constexpr std::array<double, 9> kSmooth = {1, 1, 1, 1, 5, 1, 1, 1, 1};
constexpr double kSmoothNorm = 13.0;

struct CutoutBox {
  int x0, y0, x1, y1;
};

CutoutBox cutout_box(const Image& x, double size, const OpDraw& draw) {
  const int s = int(std::lround(size * x.width / kReferenceSize));
  if (s <= 0) return {0, 0, 0, 0};
  const int cx = std::min(x.width - 1, int(draw.u * x.width));
  const int cy = std::min(x.height - 1, int(draw.v * x.height));
  const int x0 = std::max(0, cx - s / 2), y0 = std::max(0, cy - s / 2);
  return {x0, y0, std::min(x.width, cx - s / 2 + s), std::min(x.height, cy - s / 2 + s)};
}

constexpr double kCutoutFill = 0.5;

const Image* usable_partner(const Image& x, const OpDraw& draw) {
  return draw.partner != nullptr && draw.partner->same_shape(x) ? draw.partner : nullptr;
}

// Forward pass before the final clamp.
Image forward_unclamped(const Image& x, const AugmentationOp& op, double param, const OpDraw& draw) {
  if (is_geometric(op.kind)) return warp(x, geometric_map(op.kind, param, x.height, x.width));
  Image out = x;
  switch (op.kind) {
    case OpKind::AutoContrast:
      for (int c = 0; c < x.channels; ++c) {
        const double lo = x.channel(c).minCoeff(), hi = x.channel(c).maxCoeff();
        if (hi > lo) out.channel(c) = (x.channel(c) - lo) / (hi - lo);
      }
      break;
    case OpKind::Invert:
      out.pixels = 1.0 - x.pixels;
      break;
    case OpKind::Equalize:
      for (int c = 0; c < x.channels; ++c) {
        const auto lut = equalize_lut(x.channel(c));
        if (lut.empty()) continue;
        auto dst = out.channel(c);
        for (Eigen::Index i = 0; i < dst.size(); ++i) dst[i] = lut[to_level(x.channel(c)[i])] / 255.0;
      }
      break;
    case OpKind::Solarize:
      for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x.pixels[i] >= param) out.pixels[i] = 1.0 - x.pixels[i];
      break;
    case OpKind::Posterize: {
      const int dropped = int(std::lround(param));
      if (dropped <= 0) break;
      const int mask = ~((1 << dropped) - 1) & 0xFF;
      for (Eigen::Index i = 0; i < x.size(); ++i) out.pixels[i] = (to_level(x.pixels[i]) & mask) / 255.0;
      break;
    }
    case OpKind::Contrast: {
      const double mean = luma_plane(x).mean();
      out.pixels = mean + param * (x.pixels - mean);
      break;
    }
    case OpKind::Color:
      if (x.channels == 3) {
        const Eigen::ArrayXd g = luma_plane(x);
        for (int c = 0; c < 3; ++c) out.channel(c) = g + param * (x.channel(c) - g);
      }
      break;
    case OpKind::Brightness:
      out.pixels = param * x.pixels;
      break;
    case OpKind::Sharpness:
      if (x.height >= 3 && x.width >= 3) {
        const int w = x.width;
        for (int c = 0; c < x.channels; ++c) {
          const double* s = x.pixels.data() + c * x.plane();
          double* d = out.pixels.data() + c * x.plane();
          for (int y = 1; y + 1 < x.height; ++y) {
            for (int col = 1; col + 1 < w; ++col) {
              const double* q = s + Eigen::Index(y) * w + col;
              const double blur = (q[-w - 1] + q[-w] + q[-w + 1] + q[-1] + kSmooth[4] * q[0] + q[1] + q[w - 1] + q[w] +
                                   q[w + 1]) /
                                  kSmoothNorm;
              d[Eigen::Index(y) * w + col] = blur + param * (q[0] - blur);
            }
          }
        }
      }
      break;
    case OpKind::Cutout: {
      const CutoutBox b = cutout_box(x, param, draw);
      for (int c = 0; c < x.channels; ++c)
        for (int y = b.y0; y < b.y1; ++y)
          for (int col = b.x0; col < b.x1; ++col) out.at(c, y, col) = kCutoutFill;
      break;
    }
    case OpKind::Flip:
      for (int c = 0; c < x.channels; ++c)
        for (int y = 0; y < x.height; ++y)
          for (int col = 0; col < x.width; ++col) out.at(c, y, col) = x.at(c, y, x.width - 1 - col);
      break;
    case OpKind::SamplePairing:
      if (const Image* partner = usable_partner(x, draw)) out.pixels = (1.0 - param) * x.pixels + param * partner->pixels;
      break;
    default:
      break;
  }
  return out;
}

// Transpose of forward_unclamped's Jacobian applied to `u`.
Image vjp_unclamped(const Image& x, const AugmentationOp& op, double param, const Image& u, const OpDraw& draw) {
  if (is_geometric(op.kind)) return warp_vjp(u, geometric_map(op.kind, param, x.height, x.width));
  Image g = u;
  switch (op.kind) {
    case OpKind::AutoContrast:
      for (int c = 0; c < x.channels; ++c) {
        const auto plane = x.channel(c);
        Eigen::Index imin = 0, imax = 0;
        const double lo = plane.minCoeff(&imin), hi = plane.maxCoeff(&imax);
        if (!(hi > lo)) continue;
        const double s = 1.0 / (hi - lo);
        const auto uc = u.channel(c);
        auto gc = g.channel(c);
        gc = uc * s;
        const double d_lo = (uc * (-s + (plane - lo) * s * s)).sum();
        const double d_hi = -(uc * (plane - lo) * s * s).sum();
        gc[imin] += d_lo;
        gc[imax] += d_hi;
      }
      break;
    case OpKind::Invert:
      g.pixels = -u.pixels;
      break;
    case OpKind::Solarize:
      for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x.pixels[i] >= param) g.pixels[i] = -u.pixels[i];
      break;
    case OpKind::Contrast: {
      const double scale = (1.0 - param) * u.pixels.sum() / double(x.plane());
      for (int c = 0; c < x.channels; ++c) g.channel(c) = param * u.channel(c) + scale * luma_weight(x, c);
      break;
    }
    case OpKind::Color:
      if (x.channels == 3) {
        const Eigen::ArrayXd usum = u.channel(0) + u.channel(1) + u.channel(2);
        for (int c = 0; c < 3; ++c) g.channel(c) = param * u.channel(c) + (1.0 - param) * kLuma[c] * usum;
      }
      break;
    case OpKind::Brightness:
      g.pixels = param * u.pixels;
      break;
    case OpKind::Sharpness:
      if (x.height >= 3 && x.width >= 3) {
        for (int c = 0; c < x.channels; ++c) {
          for (int y = 1; y + 1 < x.height; ++y) {
            for (int col = 1; col + 1 < x.width; ++col) {
              const double uo = u.at(c, y, col);
              // Interior output = param * x + (1 - param) * blur(x).
              g.at(c, y, col) += (param - 1.0) * uo;
              const double spread = (1.0 - param) * uo / kSmoothNorm;
              for (int k = 0; k < 9; ++k) g.at(c, y + k / 3 - 1, col + k % 3 - 1) += kSmooth[k] * spread;
            }
          }
        }
      }
      break;
    case OpKind::Cutout: {
      const CutoutBox b = cutout_box(x, param, draw);
      for (int c = 0; c < x.channels; ++c)
        for (int y = b.y0; y < b.y1; ++y)
          for (int col = b.x0; col < b.x1; ++col) g.at(c, y, col) = 0.0;
      break;
    }
    case OpKind::Flip:
      for (int c = 0; c < x.channels; ++c)
        for (int y = 0; y < x.height; ++y)
          for (int col = 0; col < x.width; ++col) g.at(c, y, col) = u.at(c, y, x.width - 1 - col);
      break;
    case OpKind::SamplePairing:
      if (usable_partner(x, draw) != nullptr) g.pixels = (1.0 - param) * u.pixels;
      break;
    default:
      // Identity, plus straight-through for Equalize and Posterize.
      break;
  }
  return g;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string_view op_name(OpKind kind) {
  for (const auto& [k, name] : kNames)
    if (k == kind) return name;
  return "Unknown";
}

std::optional<OpKind> op_kind_from_name(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name) return k;
  return std::nullopt;
}

AugmentationOp default_op(OpKind kind) {
  AugmentationOp op;
  op.kind = kind;
  op.name = std::string(op_name(kind));
  op.uses_magnitude = true;
  switch (kind) {
    case OpKind::ShearX:
    case OpKind::ShearY:
      op.low = -0.3, op.high = 0.3;
      break;
    case OpKind::TranslateX:
    case OpKind::TranslateY:
      op.low = -10.0, op.high = 10.0;
      break;
    case OpKind::Rotate:
      op.low = -30.0, op.high = 30.0;
      break;
    case OpKind::Solarize:
      op.low = 0.0, op.high = 1.0, op.discrete = true, op.step = 1.0 / 256.0;
      break;
    case OpKind::Posterize:
      // Bits removed from an 8-bit level: 0 keeps 8 bits, 4 keeps 4.
      op.low = 0.0, op.high = 4.0, op.discrete = true, op.step = 1.0;
      op.pixel_differentiable = false;
      break;
    case OpKind::Contrast:
    case OpKind::Color:
    case OpKind::Brightness:
    case OpKind::Sharpness:
      op.low = 0.1, op.high = 1.9;
      break;
    case OpKind::Cutout:
      op.low = 0.0, op.high = 20.0;
      break;
    case OpKind::SamplePairing:
      op.low = 0.0, op.high = 0.4;
      break;
    case OpKind::Equalize:
      op.pixel_differentiable = false;
      op.uses_magnitude = false;
      break;
    case OpKind::AutoContrast:
    case OpKind::Invert:
    case OpKind::Flip:
    case OpKind::Identity:
      op.uses_magnitude = false;
      break;
  }
  return op;
}

OpDraw draw_op_randomness(Rng& rng, const Image* partner) {
  OpDraw d;
  d.u = uniform01(rng);
  d.v = uniform01(rng);
  d.partner = partner;
  return d;
}

OpRegistry::OpRegistry(std::vector<AugmentationOp> ops) : ops_(std::move(ops)) {
  if (ops_.empty()) throw ConfigError("op registry is empty");
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    const auto& op = ops_[i];
    if (op.uses_magnitude && !(op.low < op.high))
      throw ConfigError("op " + op.name + ": magnitude range needs low < high");
    if (op.discrete && !(op.step > 0.0)) throw ConfigError("op " + op.name + ": discrete op needs a positive step");
    for (std::size_t j = 0; j < i; ++j)
      if (ops_[j].name == op.name) throw ConfigError("op " + op.name + " listed twice");
  }
}

OpRegistry OpRegistry::standard(std::string_view reserved_slot) {
  if (reserved_slot != "Flip" && reserved_slot != "SamplePairing")
    throw ConfigError("reserved op slot must be Flip or SamplePairing, got " + std::string(reserved_slot));
  return from_names({"ShearX", "ShearY", "TranslateX", "TranslateY", "Rotate", "AutoContrast", "Invert", "Equalize",
                     "Solarize", "Posterize", "Contrast", "Color", "Brightness", "Sharpness", "Cutout",
                     std::string(reserved_slot), "Identity"});
}

OpRegistry OpRegistry::from_names(const std::vector<std::string>& names) {
  std::vector<AugmentationOp> ops;
  for (const auto& name : names) {
    const auto kind = op_kind_from_name(name);
    if (!kind) throw ConfigError("unknown augmentation op: " + name);
    ops.push_back(default_op(*kind));
  }
  return OpRegistry(std::move(ops));
}

OpRegistry OpRegistry::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("op registry: ") + e.what());
  }
  if (!j.contains("ops") || !j["ops"].is_array()) throw ConfigError("op registry: missing \"ops\" array");
  std::vector<AugmentationOp> ops;
  for (const auto& entry : j["ops"]) {
    const std::string name = entry.is_string() ? entry.get<std::string>() : entry.value("name", std::string());
    const auto kind = op_kind_from_name(name);
    if (!kind) throw ConfigError("unknown augmentation op: " + name);
    AugmentationOp op = default_op(*kind);
    if (entry.is_object()) {
      op.low = entry.value("low", op.low);
      op.high = entry.value("high", op.high);
      op.discrete = entry.value("discrete", op.discrete);
      op.step = entry.value("step", op.step);
    }
    ops.push_back(op);
  }
  return OpRegistry(std::move(ops));
}

OpRegistry OpRegistry::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open op registry file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string OpRegistry::to_json() const {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& op : ops_) {
    ops.push_back({{"name", op.name},
                   {"low", op.low},
                   {"high", op.high},
                   {"discrete", op.discrete},
                   {"step", op.step},
                   {"uses_magnitude", op.uses_magnitude}});
  }
  return nlohmann::json{{"reference_size", kReferenceSize}, {"ops", ops}}.dump(2);
}

void OpRegistry::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write op registry file " + path);
  out << to_json() << "\n";
}

std::string OpRegistry::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

std::optional<std::size_t> OpRegistry::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < ops_.size(); ++i)
    if (ops_[i].name == name) return i;
  return std::nullopt;
}

double map_magnitude_continuous(const AugmentationOp& op, double lambda) {
  return op.low + lambda * (op.high - op.low);
}

double map_magnitude(const AugmentationOp& op, double lambda) {
  const double v = map_magnitude_continuous(op, lambda);
  if (!op.discrete) return v;
  const double snapped = op.low + op.step * std::round((v - op.low) / op.step);
  return std::min(op.high, std::max(op.low, snapped));
}

Image apply_op(const Image& x, const AugmentationOp& op, double lambda, const OpDraw& draw) {
  ++g_apply_count;
  if (op.kind == OpKind::Identity) return x;
  Image out = forward_unclamped(x, op, map_magnitude(op, lambda), draw);
  out.pixels = out.pixels.max(0.0).min(1.0);
  return out;
}

Image apply_op_vjp(const Image& x, const AugmentationOp& op, double lambda, const Image& upstream,
                   const OpDraw& draw) {
  require_same_shape(x, upstream, "apply_op_vjp");
  if (op.kind == OpKind::Identity) return upstream;
  const double param = map_magnitude(op, lambda);
  const Image pre = forward_unclamped(x, op, param, draw);
  Image masked = upstream;
  masked.pixels = (pre.pixels >= 0.0 && pre.pixels <= 1.0).select(upstream.pixels, 0.0);
  return vjp_unclamped(x, op, param, masked, draw);
}

Eigen::VectorXd perturb_magnitude(const Eigen::VectorXd& lambda, double delta, Rng& rng) {
  if (delta < 0.0) throw ConfigError("magnitude perturbation must be non-negative");
  if (delta == 0.0) return lambda;
  Eigen::VectorXd out(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) out[i] = clamp01(lambda[i] + uniform(rng, -delta, delta));
  return out;
}

std::uint64_t op_application_count() { return g_apply_count; }
void reset_op_application_count() { g_apply_count = 0; }

}  // namespace madaug
