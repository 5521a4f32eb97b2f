#pragma once

// Independent reference computations used as test oracles. Nothing here calls
// into the library's numerical code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsm/encoder.hpp"
#include "dsm/video.hpp"

namespace oracle {

// Dense Gaussian elimination with partial pivoting. a is n x n row-major.
inline std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    }
    if (std::abs(a[piv * n + col]) < 1e-14) throw std::runtime_error("oracle: singular matrix");
    if (piv != col) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[col * n + k], a[piv * n + k]);
      std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      if (f == 0.0) continue;
      for (std::size_t k = col; k < n; ++k) a[r * n + k] -= f * a[col * n + k];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i * n + k] * x[k];
    x[i] = s / a[i * n + i];
  }
  return x;
}

// Thin-plate spline fit: returns (w_0..w_{n-1}, a0, ax, ay) for one output
// coordinate, U(r) = r^2 log r^2.
inline std::vector<double> tps_fit(const std::vector<dsm::Point2>& d, const std::vector<double>& target) {
  const std::size_t n = d.size(), m = n + 3;
  std::vector<double> a(m * m, 0.0), b(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double r2 = (d[i].x - d[j].x) * (d[i].x - d[j].x) + (d[i].y - d[j].y) * (d[i].y - d[j].y);
      a[i * m + j] = r2 > 0.0 ? r2 * std::log(r2) : 0.0;
    }
    const double p[3] = {1.0, d[i].x, d[i].y};
    for (int k = 0; k < 3; ++k) {
      a[i * m + n + k] = p[k];
      a[(n + k) * m + i] = p[k];
    }
    b[i] = target[i];
  }
  return solve_dense(a, b);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Peak signal-to-noise ratio for [0,1] data over the pixels where mask is true.
inline double psnr(const std::vector<float>& a, const std::vector<float>& b, const std::vector<bool>& mask) {
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double e = static_cast<double>(a[i]) - b[i];
    se += e * e;
    ++n;
  }
  if (n == 0) throw std::runtime_error("oracle: empty psnr mask");
  const double mse = se / static_cast<double>(n);
  return mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
}

// Mask of pixels at least `border` away from every frame edge, replicated over channels.
inline std::vector<bool> interior_mask(int h, int w, int c, int border) {
  std::vector<bool> m(static_cast<std::size_t>(h) * w * c, false);
  for (int y = border; y < h - border; ++y) {
    for (int x = border; x < w - border; ++x) {
      for (int k = 0; k < c; ++k) m[(static_cast<std::size_t>(y) * w + x) * c + k] = true;
    }
  }
  return m;
}

// Straight-line encoder forward: direct 7-deep loop convolution in double
// precision, written from the documented layout only.
inline std::vector<double> encoder_forward(const dsm::EncoderState& state, const dsm::VideoClip& clip) {
  const dsm::EncoderConfig& cfg = state.config;
  int T = cfg.frames, H = cfg.height, W = cfg.width, C = cfg.channels;
  std::vector<double> x(clip.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(clip.data()[i]) - 0.5;
  std::size_t off = 0;
  for (const dsm::ConvStage& s : cfg.stages) {
    const int kt = s.kernel[0], kh = s.kernel[1], kw = s.kernel[2];
    const int To = (T + 2 * (kt / 2) - kt) / s.stride[0] + 1;
    const int Ho = (H + 2 * (kh / 2) - kh) / s.stride[1] + 1;
    const int Wo = (W + 2 * (kw / 2) - kw) / s.stride[2] + 1;
    const int Co = s.out_channels;
    const float* wts = state.params.data() + off;
    const float* bias = wts + static_cast<std::size_t>(kt) * kh * kw * C * Co;
    std::vector<double> y(static_cast<std::size_t>(To) * Ho * Wo * Co);
    for (int t = 0; t < To; ++t)
      for (int h = 0; h < Ho; ++h)
        for (int w = 0; w < Wo; ++w)
          for (int co = 0; co < Co; ++co) {
            double acc = bias[co];
            for (int a = 0; a < kt; ++a)
              for (int b = 0; b < kh; ++b)
                for (int c = 0; c < kw; ++c) {
                  const int ti = t * s.stride[0] + a - kt / 2;
                  const int hi = h * s.stride[1] + b - kh / 2;
                  const int wi = w * s.stride[2] + c - kw / 2;
                  if (ti < 0 || ti >= T || hi < 0 || hi >= H || wi < 0 || wi >= W) continue;
                  for (int ci = 0; ci < C; ++ci) {
                    const double xv = x[((static_cast<std::size_t>(ti) * H + hi) * W + wi) * C + ci];
                    const double wv = wts[(((static_cast<std::size_t>(a) * kh + b) * kw + c) * C + ci) * Co + co];
                    acc += xv * wv;
                  }
                }
            y[((static_cast<std::size_t>(t) * Ho + h) * Wo + w) * Co + co] = std::max(0.0, acc);
          }
    off += static_cast<std::size_t>(kt) * kh * kw * C * Co + Co;
    x = std::move(y);
    T = To, H = Ho, W = Wo, C = Co;
  }
  std::vector<double> pooled(C, 0.0);
  const std::size_t cells = static_cast<std::size_t>(T) * H * W;
  for (std::size_t i = 0; i < cells; ++i)
    for (int c = 0; c < C; ++c) pooled[c] += x[i * C + c];
  for (double& v : pooled) v /= static_cast<double>(cells);
  const int D = cfg.embed_dim;
  const float* pw = state.params.data() + off;
  const float* pb = pw + static_cast<std::size_t>(D) * C;
  std::vector<double> z(D);
  double n2 = 0.0;
  for (int d = 0; d < D; ++d) {
    double acc = pb[d];
    for (int c = 0; c < C; ++c) acc += pw[static_cast<std::size_t>(d) * C + c] * pooled[c];
    z[d] = acc;
    n2 += acc * acc;
  }
  const double n = std::sqrt(n2);
  for (double& v : z) v /= n;
  return z;
}

inline dsm::VideoClip random_clip(int t, int h, int w, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> data(static_cast<std::size_t>(t) * h * w * c);
  for (float& v : data) v = u(rng);
  return dsm::VideoClip(t, h, w, c, std::move(data));
}

inline std::vector<double> random_unit(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(d);
  double n2 = 0.0;
  for (double& x : v) {
    x = g(rng);
    n2 += x * x;
  }
  for (double& x : v) x /= std::sqrt(n2);
  return v;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("dsm_test_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
