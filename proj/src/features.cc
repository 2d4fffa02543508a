// Copyright 2026 The capsed Authors. All Rights Reserved.
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

#include "capsed/features.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

#include "capsed/tensor_io.h"
#include "json.hpp"

namespace capsed {

FeatureConfig FeatureConfig::Desk() {
  FeatureConfig c;
  c.hop_length = 1333;
  c.target_frames = 120;
  return c;
}

std::size_t FeatureConfig::fft_size() const {
  std::size_t n = 1;
  while (n < frame_length) n <<= 1;
  return n;
}

double FeatureConfig::silence_value() const { return std::log(log_floor); }

void FeatureConfig::Validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("feature config: " + what); };
  if (sample_rate <= 0) fail("sample_rate must be positive");
  if (frame_length == 0 || hop_length == 0) fail("frame_length and hop_length must be positive");
  if (mel_bins == 0) fail("mel_bins must be positive");
  if (target_frames == 0) fail("target_frames must be positive");
  if (!(fmin >= 0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    fail("need 0 <= fmin < fmax <= sample_rate / 2");
  }
  if (!(log_floor > 0)) fail("log_floor must be positive");
}

namespace {

constexpr int kZeroCrossings = 16;
constexpr double kKaiserBeta = 8.6;
constexpr double kRolloff = 0.95;

double Sinc(double x) {
  if (x == 0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

std::vector<float> Resample(std::span<const float> signal, int source_rate, int target_rate) {
  if (signal.empty()) throw std::invalid_argument("resample: empty signal");
  if (source_rate <= 0 || target_rate <= 0) throw std::invalid_argument("resample: bad rate");
  if (source_rate == target_rate) return {signal.begin(), signal.end()};

  const long g = std::gcd(source_rate, target_rate);
  const long up = target_rate / g, down = source_rate / g;
  const long n = static_cast<long>(signal.size());
  const long out_len = (n * up + down / 2) / down;
  // Cutoff relative to the input Nyquist frequency.
  const double cutoff = kRolloff * std::min(1.0, static_cast<double>(up) / down);
  const double half_width = kZeroCrossings / cutoff;
  const long taps = static_cast<long>(std::ceil(half_width));
  const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);

  // One filter per output phase; output m sits at input position m * down / up.
  std::vector<double> table(up * 2 * taps);
  for (long phase = 0; phase < up; ++phase) {
    const double frac = static_cast<double>(phase) / up;
    for (long j = -taps + 1; j <= taps; ++j) {
      const double d = j - frac;
      const double r = d / half_width;
      double w = 0;
      if (std::abs(r) < 1) {
        w = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1 - r * r)) / i0_beta;
      }
      table[phase * 2 * taps + (j + taps - 1)] = cutoff * Sinc(cutoff * d) * w;
    }
  }

  std::vector<float> out(out_len);
  for (long m = 0; m < out_len; ++m) {
    const long base = m * down / up;
    const long phase = m * down % up;
    const double* h = &table[phase * 2 * taps];
    double acc = 0;
    const long lo = std::max(-taps + 1, -base);
    const long hi = std::min(taps, n - 1 - base);
    for (long j = lo; j <= hi; ++j) acc += h[j + taps - 1] * signal[base + j];
    out[m] = static_cast<float>(acc);
  }
  return out;
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<double> MelEdges(const FeatureConfig& c) {
  const double lo = HzToMel(c.fmin), hi = HzToMel(c.fmax);
  std::vector<double> hz(c.mel_bins + 2);
  for (std::size_t i = 0; i < hz.size(); ++i) {
    hz[i] = MelToHz(lo + (hi - lo) * static_cast<double>(i) / (c.mel_bins + 1));
  }
  return hz;
}

}  // namespace

std::vector<double> MelBandCenters(const FeatureConfig& config) {
  std::vector<double> edges = MelEdges(config);
  return {edges.begin() + 1, edges.end() - 1};
}

Tensor<double> MelFilterbank(const FeatureConfig& config) {
  config.Validate();
  const std::size_t nfft = config.fft_size(), bins = nfft / 2 + 1;
  const std::vector<double> hz = MelEdges(config);
  Tensor<double> fb({config.mel_bins, bins});
  for (std::size_t m = 0; m < config.mel_bins; ++m) {
    const double lower = hz[m], center = hz[m + 1], upper = hz[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate / nfft;
      const double w = std::min((f - lower) / (center - lower), (upper - f) / (upper - center));
      fb[m * bins + k] = std::max(0.0, w);
    }
  }
  return fb;
}

Tensor<float> LogMel(std::span<const float> signal, const FeatureConfig& config) {
  config.Validate();
  if (signal.size() < config.frame_length) {
    throw std::invalid_argument("logmel: signal of " + std::to_string(signal.size()) +
                                " samples is shorter than one frame (" +
                                std::to_string(config.frame_length) + ")");
  }
  const std::size_t nfft = config.fft_size(), bins = nfft / 2 + 1;
  const std::size_t frames = signal.size() / config.hop_length;
  const Tensor<double> fb = MelFilterbank(config);

  std::vector<double> window(config.frame_length);
  for (std::size_t i = 0; i < window.size(); ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / config.frame_length);
  }

  Eigen::FFT<double> fft;
  std::vector<double> frame(nfft);
  std::vector<std::complex<double>> spectrum;
  std::vector<double> magnitude(bins);
  Tensor<float> out({frames, config.mel_bins});
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    const std::size_t start = t * config.hop_length;
    const std::size_t count = std::min(config.frame_length, signal.size() - start);
    for (std::size_t i = 0; i < count; ++i) frame[i] = window[i] * signal[start + i];
    fft.fwd(spectrum, frame);
    for (std::size_t k = 0; k < bins; ++k) magnitude[k] = std::abs(spectrum[k]);
    for (std::size_t m = 0; m < config.mel_bins; ++m) {
      double e = 0;
      const double* w = &fb[m * bins];
      for (std::size_t k = 0; k < bins; ++k) e += w[k] * magnitude[k];
      out[t * config.mel_bins + m] = static_cast<float>(std::log(e + config.log_floor));
    }
  }
  return out;
}

Tensor<float> PadOrCrop(const Tensor<float>& features, std::size_t target_frames,
                        float pad_value) {
  if (features.rank() != 2 || target_frames == 0) {
    throw DimensionError("pad_or_crop: features " + ShapeToString(features.shape()) +
                         " must be [frames x bins]");
  }
  const std::size_t bins = features.dim(1);
  const std::size_t keep = std::min(features.dim(0), target_frames) * bins;
  Tensor<float> out({target_frames, bins}, pad_value);
  std::copy_n(features.data().begin(), keep, out.data().begin());
  return out;
}

Tensor<float> ExtractFeatures(const Audio& audio, const FeatureConfig& config) {
  const std::vector<float> signal = Resample(audio.samples, audio.sample_rate, config.sample_rate);
  return PadOrCrop(LogMel(signal, config), config.target_frames,
                   static_cast<float>(config.silence_value()));
}

Standardizer Standardizer::Fit(const std::vector<Tensor<float>>& features) {
  if (features.empty()) throw std::invalid_argument("standardizer: no training features");
  const std::size_t bins = features.front().dim(1);
  std::vector<double> sum(bins), sum_sq(bins);
  std::size_t frames = 0;
  for (const auto& f : features) {
    if (f.rank() != 2 || f.dim(1) != bins) {
      throw DimensionError("standardizer: features " + ShapeToString(f.shape()) +
                           " do not have " + std::to_string(bins) + " bins");
    }
    frames += f.dim(0);
    for (std::size_t t = 0; t < f.dim(0); ++t) {
      for (std::size_t b = 0; b < bins; ++b) sum[b] += f[t * bins + b];
    }
  }
  std::vector<float> mean(bins), var(bins);
  for (std::size_t b = 0; b < bins; ++b) mean[b] = static_cast<float>(sum[b] / frames);
  // Second pass about the mean for numerical accuracy.
  for (const auto& f : features) {
    for (std::size_t t = 0; t < f.dim(0); ++t) {
      for (std::size_t b = 0; b < bins; ++b) {
        const double d = f[t * bins + b] - sum[b] / frames;
        sum_sq[b] += d * d;
      }
    }
  }
  for (std::size_t b = 0; b < bins; ++b) var[b] = static_cast<float>(sum_sq[b] / frames);
  return {Tensor<float>(Shape{bins}, std::move(mean)), Tensor<float>(Shape{bins}, std::move(var)),
          frames};
}

namespace {

void CheckBins(const Tensor<float>& x, const Tensor<float>& mean) {
  if (x.rank() != 2 || x.dim(1) != mean.size()) {
    throw DimensionError("standardizer: features " + ShapeToString(x.shape()) + " vs stats " +
                         ShapeToString(mean.shape()));
  }
}

}  // namespace

Tensor<float> Standardizer::Apply(const Tensor<float>& features) const {
  CheckBins(features, mean);
  const std::size_t bins = mean.size();
  Tensor<float> out = features;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t b = i % bins;
    const double sd = std::max(std::sqrt(static_cast<double>(variance[b])), kMinStd);
    out[i] = static_cast<float>((features[i] - static_cast<double>(mean[b])) / sd);
  }
  return out;
}

Tensor<float> Standardizer::Invert(const Tensor<float>& standardized) const {
  CheckBins(standardized, mean);
  const std::size_t bins = mean.size();
  Tensor<float> out = standardized;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t b = i % bins;
    const double sd = std::max(std::sqrt(static_cast<double>(variance[b])), kMinStd);
    out[i] = static_cast<float>(standardized[i] * sd + mean[b]);
  }
  return out;
}

void Standardizer::Save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  SaveTensor(dir / "standardizer_mean.ctsr", mean);
  SaveTensor(dir / "standardizer_var.ctsr", variance);
  nlohmann::ordered_json meta = {{"mean", "standardizer_mean.ctsr"},
                                 {"variance", "standardizer_var.ctsr"},
                                 {"bins", mean.size()},
                                 {"frames", frames},
                                 {"min_std", kMinStd}};
  std::ofstream(dir / "standardizer.json") << meta.dump(2) << "\n";
}

Standardizer Standardizer::Load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "standardizer.json");
  if (!in) {
    throw std::filesystem::filesystem_error("cannot open standardizer metadata",
                                            dir / "standardizer.json",
                                            std::make_error_code(std::errc::no_such_file_or_directory));
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
    Standardizer s{LoadTensor(dir / meta.at("mean").get<std::string>()),
                   LoadTensor(dir / meta.at("variance").get<std::string>()),
                   meta.at("frames").get<std::size_t>()};
    if (s.mean.shape() != s.variance.shape() || s.mean.size() != meta.at("bins").get<std::size_t>()) {
      throw FormatError("standardizer: mean/variance shapes disagree with metadata");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("standardizer metadata: ") + e.what());
  }
}

}  // namespace capsed
