#include "dancecam/ingest/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>

#include <unsupported/Eigen/FFT>

namespace dancecam::ingest {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

Audio readWav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("wav: cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw FormatError("wav: not a RIFF/WAVE file: " + path.string());

  int format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* c = buf.data() + pos;
    const std::uint32_t len = le32(c + 4);
    const std::size_t body = pos + 8;
    if (body + len > buf.size()) {
      if (std::memcmp(c, "data", 4) == 0) {  // tolerate truncated data chunk
        data = buf.data() + body;
        data_len = buf.size() - body;
      }
      break;
    }
    if (std::memcmp(c, "fmt ", 4) == 0 && len >= 16) {
      format = le16(c + 8);
      channels = le16(c + 10);
      rate = le32(c + 12);
      bits = le16(c + 22);
      if (format == 0xFFFE && len >= 40) format = le16(c + 8 + 24);
    } else if (std::memcmp(c, "data", 4) == 0) {
      data = buf.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1u);
  }
  if (channels <= 0 || rate == 0 || data == nullptr) throw FormatError("wav: missing fmt or data chunk");
  if (!((format == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) || (format == 3 && bits == 32)))
    throw FormatError("wav: unsupported sample format");

  const std::size_t bytes = static_cast<std::size_t>(bits / 8);
  const std::size_t frames = data_len / (bytes * static_cast<std::size_t>(channels));
  Audio a;
  a.sample_rate = static_cast<int>(rate);
  a.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int ch = 0; ch < channels; ++ch) {
      const unsigned char* s = data + (i * static_cast<std::size_t>(channels) + static_cast<std::size_t>(ch)) * bytes;
      double v = 0.0;
      if (format == 3) {
        float f;
        std::memcpy(&f, s, 4);
        v = f;
      } else if (bits == 8) {
        v = (static_cast<int>(s[0]) - 128) / 128.0;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(le16(s)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t x = static_cast<std::int32_t>(s[0] | (s[1] << 8) | (s[2] << 16));
        if (x & 0x800000) x -= 0x1000000;
        v = x / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(le32(s)) / 2147483648.0;
      }
      acc += v;
    }
    a.samples[i] = static_cast<float>(acc / channels);
  }
  return a;
}

void writeWav(const std::filesystem::path& path, const Audio& audio) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("wav: cannot open " + path.string() + " for writing");
  auto put32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  auto put16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
  const std::uint32_t data_len = static_cast<std::uint32_t>(audio.samples.size() * 2);
  os.write("RIFF", 4);
  put32(36 + data_len);
  os.write("WAVEfmt ", 8);
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<std::uint32_t>(audio.sample_rate));
  put32(static_cast<std::uint32_t>(audio.sample_rate * 2));
  put16(2);
  put16(16);
  os.write("data", 4);
  put32(data_len);
  for (float s : audio.samples) {
    const double c = std::clamp(static_cast<double>(s), -1.0, 1.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
}

namespace {

double hzToMel(double f) {
  const double f_sp = 200.0 / 3.0;
  const double min_log_hz = 1000.0, min_log_mel = min_log_hz / f_sp, logstep = std::log(6.4) / 27.0;
  return f >= min_log_hz ? min_log_mel + std::log(f / min_log_hz) / logstep : f / f_sp;
}

double melToHz(double m) {
  const double f_sp = 200.0 / 3.0;
  const double min_log_hz = 1000.0, min_log_mel = min_log_hz / f_sp, logstep = std::log(6.4) / 27.0;
  return m >= min_log_mel ? min_log_hz * std::exp(logstep * (m - min_log_mel)) : f_sp * m;
}

// Slaney-style triangular filters with area normalization.
Eigen::MatrixXd melFilterbank(int n_mels, int n_fft, int sr) {
  const int n_bins = n_fft / 2 + 1;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, n_bins);
  const double mmin = hzToMel(0.0), mmax = hzToMel(sr / 2.0);
  std::vector<double> hz(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i) hz[i] = melToHz(mmin + (mmax - mmin) * i / (n_mels + 1));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = hz[m], mid = hz[m + 1], hi = hz[m + 2];
    const double enorm = 2.0 / (hi - lo);
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sr / n_fft;
      const double up = (f - lo) / (mid - lo);
      const double down = (hi - f) / (hi - mid);
      fb(m, k) = std::max(0.0, std::min(up, down)) * enorm;
    }
  }
  return fb;
}

std::vector<double> tempoPeriodAndScore(const std::vector<double>& env, double fps, double prior_bpm,
                                        double* period) {
  const int n = static_cast<int>(env.size());
  const int min_lag = std::max(2, static_cast<int>(std::floor(fps * 60.0 / 320.0)));
  const int max_lag = std::min(n - 1, static_cast<int>(std::ceil(fps * 60.0 / 30.0)));
  double best = -1.0;
  int best_lag = static_cast<int>(std::lround(fps * 60.0 / prior_bpm));
  for (int lag = min_lag; lag <= max_lag; ++lag) {
    double ac = 0.0;
    for (int i = lag; i < n; ++i) ac += env[i] * env[i - lag];
    const double bpm = fps * 60.0 / lag;
    const double sigma = 1.0;
    const double w = std::exp(-0.5 * std::pow(std::log2(bpm / prior_bpm) / sigma, 2));
    if (ac * w > best) {
      best = ac * w;
      best_lag = lag;
    }
  }
  *period = static_cast<double>(best_lag);
  // Local score: onset envelope smoothed by a Gaussian one period wide.
  const int half = best_lag;
  std::vector<double> local(env.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = -half; k <= half; ++k) {
      const int j = i + k;
      if (j < 0 || j >= n) continue;
      const double x = k * 32.0 / best_lag;
      acc += env[j] * std::exp(-0.5 * x * x);
    }
    local[i] = acc;
  }
  return local;
}

// Dynamic-programming beat tracker over the onset envelope.
std::vector<int> trackBeats(const std::vector<double>& envelope, double fps, double prior_bpm,
                            double tightness) {
  const int n = static_cast<int>(envelope.size());
  if (n < 3) return {};
  const double mean = std::accumulate(envelope.begin(), envelope.end(), 0.0) / n;
  double var = 0.0;
  for (double e : envelope) var += (e - mean) * (e - mean);
  const double sd = std::sqrt(var / (n - 1));
  if (!(sd > 1e-12)) return {};
  std::vector<double> env(envelope.size());
  for (int i = 0; i < n; ++i) env[i] = envelope[i] / sd;

  double period = 0.0;
  const std::vector<double> local = tempoPeriodAndScore(env, fps, prior_bpm, &period);

  std::vector<double> cum(local.size());
  std::vector<int> back(local.size(), -1);
  for (int i = 0; i < n; ++i) {
    const int lo = i - static_cast<int>(std::lround(2 * period));
    const int hi = i - static_cast<int>(std::lround(period / 2));
    double best = 0.0;
    int arg = -1;
    for (int j = std::max(0, lo); j <= hi && j < i; ++j) {
      const double pen = std::log(static_cast<double>(i - j) / period);
      const double score = cum[j] - tightness * pen * pen;
      if (arg < 0 || score > best) {
        best = score;
        arg = j;
      }
    }
    cum[i] = local[i] + (arg >= 0 ? best : 0.0);
    back[i] = arg;
  }

  // Last beat: last local maximum of the cumulative score above half the
  // median of all local maxima.
  std::vector<double> maxima;
  std::vector<int> maxima_idx;
  for (int i = 1; i + 1 < n; ++i) {
    if (cum[i] > cum[i - 1] && cum[i] >= cum[i + 1]) {
      maxima.push_back(cum[i]);
      maxima_idx.push_back(i);
    }
  }
  if (maxima.empty()) return {};
  std::vector<double> sorted = maxima;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
  const double med = sorted[sorted.size() / 2];
  int last = maxima_idx.back();
  for (std::size_t k = maxima.size(); k-- > 0;) {
    if (maxima[k] >= 0.5 * med) {
      last = maxima_idx[k];
      break;
    }
  }
  std::vector<int> beats;
  for (int b = last; b >= 0; b = back[b]) beats.push_back(b);
  std::reverse(beats.begin(), beats.end());

  // Trim weak beats at the edges.
  double rms = 0.0;
  for (int b : beats) rms += local[b] * local[b];
  rms = std::sqrt(rms / beats.size());
  const double th = 0.5 * rms;
  while (!beats.empty() && local[beats.front()] <= th) beats.erase(beats.begin());
  while (!beats.empty() && local[beats.back()] <= th) beats.pop_back();
  return beats;
}

std::vector<int> pickPeaks(const std::vector<double>& envelope) {
  const int n = static_cast<int>(envelope.size());
  if (n == 0) return {};
  const auto [mn, mx] = std::minmax_element(envelope.begin(), envelope.end());
  const double range = *mx - *mn;
  if (!(range > 1e-12)) return {};
  std::vector<double> x(envelope.size());
  for (int i = 0; i < n; ++i) x[i] = (envelope[i] - *mn) / range;
  constexpr int pre_max = 1, post_max = 2, pre_avg = 3, post_avg = 4, wait = 1;
  constexpr double delta = 0.07;
  std::vector<int> peaks;
  int last = -wait - 1;
  for (int i = 0; i < n; ++i) {
    double lmax = 0.0, avg = 0.0;
    for (int j = std::max(0, i - pre_max); j < std::min(n, i + post_max); ++j) lmax = std::max(lmax, x[j]);
    int cnt = 0;
    for (int j = std::max(0, i - pre_avg); j < std::min(n, i + post_avg); ++j) {
      avg += x[j];
      ++cnt;
    }
    avg /= cnt;
    if (x[i] == lmax && x[i] >= avg + delta && i > last + wait) {
      peaks.push_back(i);
      last = i;
    }
  }
  return peaks;
}

}  // namespace

MusicTrack extractMusicFeatures(std::span<const float> samples, int sr, const FeatureConfig& cfg) {
  if (sr <= 0) throw RangeError("music features: sample rate must be positive");
  const double hop = static_cast<double>(sr) / cfg.fps;
  const long T = std::lround(static_cast<double>(samples.size()) * cfg.fps / sr);
  if (T < 1) return MusicTrack(0, kMusicDim);

  int n_fft = 512;
  while (n_fft < 4 * hop) n_fft *= 2;
  const int n_bins = n_fft / 2 + 1;
  std::vector<double> hann(static_cast<std::size_t>(n_fft));
  for (int i = 0; i < n_fft; ++i) hann[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n_fft);

  const Eigen::MatrixXd fb = melFilterbank(cfg.n_mels, n_fft, sr);
  Eigen::MatrixXd power(n_bins, T);
  Eigen::FFT<double> fft;
  std::vector<double> frame(static_cast<std::size_t>(n_fft));
  std::vector<std::complex<double>> spec;
  for (long t = 0; t < T; ++t) {
    const long centre = std::lround(t * hop);
    for (int i = 0; i < n_fft; ++i) {
      const long s = centre - n_fft / 2 + i;
      frame[i] = (s >= 0 && s < static_cast<long>(samples.size())) ? samples[static_cast<std::size_t>(s)] * hann[i] : 0.0;
    }
    fft.fwd(spec, frame);
    for (int k = 0; k < n_bins; ++k) power(k, t) = std::norm(spec[k]);
  }

  // Log-mel in dB, floored at top_db below the global maximum.
  Eigen::MatrixXd mel_db = (fb * power).unaryExpr([](double v) { return 10.0 * std::log10(std::max(v, 1e-10)); });
  const double floor_db = mel_db.maxCoeff() - cfg.top_db;
  mel_db = mel_db.cwiseMax(floor_db);

  MusicTrack out = MusicTrack::Zero(T, kMusicDim);

  // MFCC: orthonormal DCT-II over mel bands.
  const int M = cfg.n_mels;
  Eigen::MatrixXd dct(cfg.n_mfcc, M);
  for (int k = 0; k < cfg.n_mfcc; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / M) : std::sqrt(2.0 / M);
    for (int m = 0; m < M; ++m) dct(k, m) = s * std::cos(kPi * k * (2 * m + 1) / (2.0 * M));
  }
  const Eigen::MatrixXd mfcc = dct * mel_db;

  // Onset envelope: mean positive first difference of log-mel.
  std::vector<double> env(static_cast<std::size_t>(T), 0.0);
  for (long t = 1; t < T; ++t)
    env[t] = (mel_db.col(t) - mel_db.col(t - 1)).cwiseMax(0.0).mean();

  // Chroma from the power spectrum folded onto pitch classes.
  Eigen::MatrixXd chroma = Eigen::MatrixXd::Zero(12, T);
  for (int k = 1; k < n_bins; ++k) {
    const double f = static_cast<double>(k) * sr / n_fft;
    if (f < 27.5) continue;
    const double midi = 69.0 + 12.0 * std::log2(f / 440.0);
    const int pc = static_cast<int>(((std::lround(midi) % 12) + 12) % 12);
    chroma.row(pc) += power.row(k);
  }
  for (long t = 0; t < T; ++t) {
    const double mx = chroma.col(t).maxCoeff();
    if (mx > 1e-10) chroma.col(t) /= mx;
    else chroma.col(t).setZero();
  }

  const std::vector<int> beats = trackBeats(env, cfg.fps, cfg.tempo_prior_bpm, cfg.beat_tightness);
  const std::vector<int> peaks = pickPeaks(env);

  for (long t = 0; t < T; ++t) {
    out(t, feat::kEnvelope) = static_cast<float>(env[t]);
    for (int k = 0; k < cfg.n_mfcc; ++k) out(t, feat::kMfcc + k) = static_cast<float>(mfcc(k, t));
    for (int c = 0; c < 12; ++c) out(t, feat::kChroma + c) = static_cast<float>(chroma(c, t));
  }
  for (int b : beats) out(b, feat::kBeat) = 1.0f;
  for (int p : peaks) out(p, feat::kPeak) = 1.0f;
  return out;
}

}  // namespace dancecam::ingest
