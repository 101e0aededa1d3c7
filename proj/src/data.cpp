#include "drsn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "drsn/rng.hpp"

namespace drsn {

Recording parse_recording(std::istream& in, const std::string& source_name, int subject_id,
                          int gesture_label, const LoadOptions& options) {
  if (gesture_label < 0 || gesture_label >= kNumGestures) {
    throw ContractError("gesture label " + std::to_string(gesture_label) + " outside 0..7");
  }
  std::vector<std::array<double, kChannels>> rows;
  rows.reserve(options.expected_timesteps);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::array<double, kChannels> row{};
    std::size_t cols = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (true) {
      while (p < end && (*p == ' ' || *p == '\t' || *p == ',' || *p == '\r')) ++p;
      if (p >= end) break;
      const char* tok = p;
      while (p < end && !(*p == ' ' || *p == '\t' || *p == ',' || *p == '\r')) ++p;
      double v = 0;
      if (*tok == '+') ++tok;
      auto [ptr, ec] = std::from_chars(tok, p, v);
      if (ec != std::errc() || ptr != p || !std::isfinite(v)) {
        throw ParseError(source_name, line_no,
                         "non-numeric token '" + std::string(tok, p) + "'");
      }
      if (cols < kChannels) row[cols] = v;
      ++cols;
    }
    if (cols == 0) continue;
    if (cols != kChannels) {
      throw ParseError(source_name, line_no,
                       fmt::format("expected {} columns, found {}", kChannels, cols));
    }
    rows.push_back(row);
  }
  if (rows.empty()) throw ParseError(source_name, line_no, "file contains no samples");

  bool truncated = false;
  if (rows.size() != options.expected_timesteps) {
    if (!options.allow_truncation) {
      throw ParseError(source_name, line_no,
                       fmt::format("expected {} sample lines, found {}",
                                   options.expected_timesteps, rows.size()));
    }
    truncated = true;
    if (rows.size() > options.expected_timesteps) rows.resize(options.expected_timesteps);
  }

  Recording rec;
  rec.timesteps = rows.size();
  rec.subject_id = subject_id;
  rec.gesture_label = gesture_label;
  rec.truncated = truncated;
  rec.values.resize(kChannels * rec.timesteps);
  for (std::size_t t = 0; t < rec.timesteps; ++t)
    for (std::size_t c = 0; c < kChannels; ++c) rec.values[c * rec.timesteps + t] = rows[t][c];
  return rec;
}

Recording load_recording(const std::filesystem::path& path, int subject_id, int gesture_label,
                         const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open recording " + path.string());
  return parse_recording(in, path.string(), subject_id, gesture_label, options);
}

void write_recording(const std::filesystem::path& path, const Recording& recording) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  std::string line;
  for (std::size_t t = 0; t < recording.timesteps; ++t) {
    line.clear();
    for (std::size_t c = 0; c < kChannels; ++c) {
      if (c) line += ' ';
      line += fmt::format("{:.17g}", recording.at(c, t));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {
GestureSample window_of(const Recording& rec, std::size_t start, std::size_t width) {
  Tensor w(Shape{kChannels, width});
  for (std::size_t c = 0; c < kChannels; ++c)
    for (std::size_t t = 0; t < width; ++t) w[c * width + t] = rec.at(c, start + t);
  return {std::move(w), rec.gesture_label, rec.subject_id};
}
}  // namespace

std::vector<GestureSample> segment(const Recording& recording, std::size_t samples_per_recording,
                                   bool allow_truncation) {
  if (samples_per_recording == 0) throw ContractError("samples_per_recording must be positive");
  if (recording.timesteps % samples_per_recording != 0 && !allow_truncation) {
    throw ContractError(fmt::format("{} timesteps do not split into {} equal windows",
                                    recording.timesteps, samples_per_recording));
  }
  const std::size_t width = recording.timesteps / samples_per_recording;
  if (width == 0) throw ContractError("recording shorter than the number of windows");
  std::vector<GestureSample> out;
  out.reserve(samples_per_recording);
  for (std::size_t i = 0; i < samples_per_recording; ++i)
    out.push_back(window_of(recording, i * width, width));
  return out;
}

std::vector<GestureSample> segment_by_energy(const Recording& recording, std::size_t count,
                                             std::size_t width) {
  const std::size_t T = recording.timesteps;
  if (width == 0 || width > T) throw ContractError("energy window width must be in 1..timesteps");

  std::vector<double> energy(T, 0.0);
  for (std::size_t c = 0; c < kChannels; ++c) {
    double mean = 0.0;
    for (std::size_t t = 0; t < T; ++t) mean += recording.at(c, t);
    mean /= static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) {
      const double d = recording.at(c, t) - mean;
      energy[t] += d * d;
    }
  }
  // One-second moving average.
  const std::size_t half = static_cast<std::size_t>(kSampleRateHz) / 2;
  std::vector<double> prefix(T + 1, 0.0);
  for (std::size_t t = 0; t < T; ++t) prefix[t + 1] = prefix[t] + energy[t];
  std::vector<double> smooth(T);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t lo = t >= half ? t - half : 0, hi = std::min(T, t + half + 1);
    smooth[t] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  std::vector<double> sorted = smooth;
  std::sort(sorted.begin(), sorted.end());
  const double threshold = 0.5 * (sorted[T / 10] + sorted[(9 * T) / 10]);

  struct Run {
    std::size_t start, length;
  };
  std::vector<Run> runs;
  for (std::size_t t = 0; t < T;) {
    if (smooth[t] <= threshold) {
      ++t;
      continue;
    }
    std::size_t e = t;
    while (e < T && smooth[e] > threshold) ++e;
    runs.push_back({t, e - t});
    t = e;
  }
  std::stable_sort(runs.begin(), runs.end(),
                   [](const Run& a, const Run& b) { return a.length > b.length; });
  if (runs.size() > count) runs.resize(count);
  std::sort(runs.begin(), runs.end(), [](const Run& a, const Run& b) { return a.start < b.start; });

  std::vector<GestureSample> out;
  for (const Run& r : runs) {
    const std::size_t centre = r.start + r.length / 2;
    std::size_t start = centre >= width / 2 ? centre - width / 2 : 0;
    start = std::min(start, T - width);
    out.push_back(window_of(recording, start, width));
  }
  return out;
}

NormalizationStats compute_stats(std::span<const GestureSample> samples) {
  if (samples.empty()) throw ContractError("cannot compute statistics of an empty sample set");
  const std::size_t channels = samples.front().window.dim(0);
  NormalizationStats stats{std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0)};
  std::vector<double> count(channels, 0.0);
  for (const auto& s : samples) {
    const std::size_t w = s.window.dim(1);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t t = 0; t < w; ++t) stats.mean[c] += s.window[c * w + t];
      count[c] += static_cast<double>(w);
    }
  }
  for (std::size_t c = 0; c < channels; ++c) stats.mean[c] /= count[c];
  for (const auto& s : samples) {
    const std::size_t w = s.window.dim(1);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < w; ++t) {
        const double d = s.window[c * w + t] - stats.mean[c];
        stats.std[c] += d * d;
      }
  }
  for (std::size_t c = 0; c < channels; ++c) stats.std[c] = std::sqrt(stats.std[c] / count[c]);
  return stats;
}

GestureSample normalize(const GestureSample& sample, const NormalizationStats& stats) {
  GestureSample out = sample;
  const std::size_t channels = out.window.dim(0), w = out.window.dim(1);
  if (stats.mean.size() != channels || stats.std.size() != channels) {
    throw DimensionError("normalization stats do not match sample channels");
  }
  for (std::size_t c = 0; c < channels; ++c) {
    const double sd = std::max(stats.std[c], 1e-8);
    for (std::size_t t = 0; t < w; ++t) {
      double& v = out.window[c * w + t];
      v = (v - stats.mean[c]) / sd;
    }
  }
  return out;
}

void normalize_in_place(std::vector<GestureSample>& samples, const NormalizationStats& stats) {
  for (auto& s : samples) s = normalize(s, stats);
}

DatasetSplit split(const std::vector<GestureSample>& samples, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ContractError("split ratio must be in (0,1)");
  if (samples.empty()) throw DataError("cannot split an empty sample set");
  int max_label = 0;
  for (const auto& s : samples) max_label = std::max(max_label, s.label);
  std::vector<std::vector<std::size_t>> by_label(static_cast<std::size_t>(max_label) + 1);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    by_label[static_cast<std::size_t>(samples[i].label)].push_back(i);
  }

  Rng rng(derive_seed(seed, stream::split));
  DatasetSplit out;
  out.seed = seed;
  for (std::size_t label = 0; label < by_label.size(); ++label) {
    auto& idx = by_label[label];
    if (idx.empty()) continue;
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train =
        static_cast<std::size_t>(std::llround(ratio * static_cast<double>(idx.size())));
    if (n_train == 0) {
      throw DataError(fmt::format("stratified split leaves label {} without training samples",
                                  label));
    }
    for (std::size_t k = 0; k < idx.size(); ++k) {
      (k < n_train ? out.train : out.test).push_back(samples[idx[k]]);
    }
  }
  out.stats = compute_stats(out.train);
  return out;
}

GestureSample add_noise(const GestureSample& sample, const NoiseSpec& spec, std::uint64_t stream) {
  GestureSample out = sample;
  const std::size_t channels = out.window.dim(0), w = out.window.dim(1);
  Rng rng(derive_seed(derive_seed(spec.seed, stream::noise), stream));
  std::normal_distribution<double> normal(0.0, 1.0);

  double window_power = 0.0;
  for (double v : sample.window.values()) window_power += v * v;
  window_power /= static_cast<double>(sample.window.size());
  const double ratio = std::pow(10.0, spec.snr_db / 10.0);

  std::vector<double> noise(w);
  for (std::size_t c = 0; c < channels; ++c) {
    double power = 0.0;
    for (std::size_t t = 0; t < w; ++t) power += sample.window[c * w + t] * sample.window[c * w + t];
    power /= static_cast<double>(w);
    if (power == 0.0) power = window_power;

    double drawn = 0.0;
    for (double& z : noise) {
      z = normal(rng);
      drawn += z * z;
    }
    drawn /= static_cast<double>(w);
    if (power == 0.0 || drawn == 0.0) continue;
    // Rescale the draw so its empirical power hits the target exactly.
    const double gain = std::sqrt(power / ratio / drawn);
    for (std::size_t t = 0; t < w; ++t) out.window[c * w + t] += gain * noise[t];
  }
  return out;
}

std::vector<GestureSample> add_noise(const std::vector<GestureSample>& samples,
                                     const NoiseSpec& spec) {
  std::vector<GestureSample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out.push_back(add_noise(samples[i], spec, i));
  return out;
}

std::vector<GestureSample> gen_synthetic(int num_classes, int samples_per_class,
                                         std::size_t width, std::uint64_t seed) {
  if (num_classes <= 0 || samples_per_class <= 0 || width == 0) {
    throw ContractError("gen_synthetic parameters must be positive");
  }
  Rng rng(derive_seed(seed, stream::synthetic));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double dt = 1.0 / kSampleRateHz;

  std::vector<GestureSample> out;
  out.reserve(static_cast<std::size_t>(num_classes * samples_per_class));
  for (int k = 0; k < num_classes; ++k) {
    const double f_main = 20.0 + 10.0 * (k % 8);
    const double f_side = f_main + 5.0;
    for (int s = 0; s < samples_per_class; ++s) {
      Tensor w(Shape{kChannels, width});
      const double gain = 1.0 + 0.1 * normal(rng);
      for (std::size_t c = 0; c < kChannels; ++c) {
        // Each class lights up the channels in a rotated pattern.
        const double level = 0.3 + 0.7 * static_cast<double>((k + 3 * static_cast<int>(c)) % 8) / 7.0;
        const double amp = gain * level;
        const double p1 = phase(rng), p2 = phase(rng);
        for (std::size_t t = 0; t < width; ++t) {
          const double time = static_cast<double>(t) * dt;
          w[c * width + t] = amp * (std::sin(2.0 * std::numbers::pi * f_main * time + p1) +
                                    0.5 * std::sin(2.0 * std::numbers::pi * f_side * time + p2)) +
                             0.1 * normal(rng);
        }
      }
      out.push_back({std::move(w), k, s / static_cast<int>(kSamplesPerRecording)});
    }
  }
  return out;
}

std::vector<Recording> synthesize_recordings(int subjects, std::uint64_t seed) {
  if (subjects <= 0) throw ContractError("subjects must be positive");
  const int per_class = subjects * static_cast<int>(kSamplesPerRecording);
  const auto windows = gen_synthetic(kNumGestures, per_class, kWindowWidth, seed);
  std::vector<Recording> out;
  for (int subject = 0; subject < subjects; ++subject) {
    for (int label = 0; label < kNumGestures; ++label) {
      Recording rec;
      rec.timesteps = kRecordingTimesteps;
      rec.subject_id = subject;
      rec.gesture_label = label;
      rec.values.resize(kChannels * kRecordingTimesteps);
      for (std::size_t i = 0; i < kSamplesPerRecording; ++i) {
        const auto& win = windows[static_cast<std::size_t>(label * per_class) +
                                  static_cast<std::size_t>(subject) * kSamplesPerRecording + i]
                              .window;
        for (std::size_t c = 0; c < kChannels; ++c)
          for (std::size_t t = 0; t < kWindowWidth; ++t)
            rec.values[c * kRecordingTimesteps + i * kWindowWidth + t] = win[c * kWindowWidth + t];
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

Corpus load_corpus(const std::filesystem::path& root, const CorpusOptions& options) {
  namespace fs = std::filesystem;
  const std::string layout_hint =
      "expected layout <root>/<subject>/" + options.file_pattern + " with labels 0..7";
  if (!fs::is_directory(root)) {
    throw DataError("dataset root '" + root.string() + "' is not a directory; " + layout_hint);
  }
  std::vector<std::string> subjects;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) subjects.push_back(entry.path().filename().string());
  }
  if (subjects.empty()) {
    throw DataError("no subject directories under '" + root.string() + "'; " + layout_hint);
  }
  const bool numeric = std::all_of(subjects.begin(), subjects.end(), [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
  });
  std::sort(subjects.begin(), subjects.end(), [numeric](const std::string& a, const std::string& b) {
    if (numeric && a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  if (options.max_subjects > 0 && subjects.size() > options.max_subjects) {
    subjects.resize(options.max_subjects);
  }

  Corpus corpus;
  corpus.subjects = subjects;
  for (std::size_t sid = 0; sid < subjects.size(); ++sid) {
    for (int label = 0; label < kNumGestures; ++label) {
      std::string name = options.file_pattern;
      const auto pos = name.find("{label}");
      if (pos != std::string::npos) name.replace(pos, 7, std::to_string(label));
      const fs::path file = root / subjects[sid] / name;
      if (!fs::exists(file)) throw DataError("missing recording " + file.string() + "; " + layout_hint);
      const Recording rec = load_recording(file, static_cast<int>(sid), label, options.load);
      auto windows = options.energy_segmenter
                         ? segment_by_energy(rec)
                         : segment(rec, kSamplesPerRecording, options.load.allow_truncation);
      for (auto& w : windows) corpus.samples.push_back(std::move(w));
      ++corpus.recordings;
    }
  }
  return corpus;
}

}  // namespace drsn
