#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drsn/tensor.hpp"

namespace drsn {

// Myo armband protocol: 8 electrodes sampled at 200 Hz, one-minute recording
// per gesture, cut into 10 labeled windows.
inline constexpr std::size_t kChannels = 8;
inline constexpr double kSampleRateHz = 200.0;
inline constexpr std::size_t kRecordingTimesteps = 12000;
inline constexpr std::size_t kSamplesPerRecording = 10;
inline constexpr std::size_t kWindowWidth = kRecordingTimesteps / kSamplesPerRecording;
inline constexpr int kNumGestures = 8;

inline constexpr std::array<std::string_view, kNumGestures> kGestureNames = {
    "hibernation",     "flexion",   "extension",  "radial deviation",
    "ulnar deviation", "pronation", "supination", "fist"};

struct Recording {
  std::size_t timesteps = 0;
  // Channel-major: values[c * timesteps + t].
  std::vector<double> values;
  int subject_id = 0;
  int gesture_label = 0;
  bool truncated = false;

  double at(std::size_t channel, std::size_t t) const { return values[channel * timesteps + t]; }
};

struct LoadOptions {
  std::size_t expected_timesteps = kRecordingTimesteps;
  // Accept short files and cut long ones to expected_timesteps, flagging the
  // recording as truncated, instead of rejecting them.
  bool allow_truncation = false;
};

struct GestureSample {
  Tensor window;  // [channels, W]
  int label = 0;
  int subject_id = 0;
};

/// Parses numeric text with 8 whitespace- or comma-separated values per line
/// (blank lines are skipped). Throws ParseError citing the offending line.
Recording load_recording(const std::filesystem::path& path, int subject_id, int gesture_label,
                         const LoadOptions& options = {});
Recording parse_recording(std::istream& in, const std::string& source_name, int subject_id,
                          int gesture_label, const LoadOptions& options = {});
void write_recording(const std::filesystem::path& path, const Recording& recording);

/// Cuts a recording into equal contiguous windows; window i covers
/// [i*W, (i+1)*W). Throws ContractError when the length is not divisible,
/// unless `allow_truncation` (the tail is then dropped).
std::vector<GestureSample> segment(const Recording& recording,
                                   std::size_t samples_per_recording = kSamplesPerRecording,
                                   bool allow_truncation = false);

/// Alternative segmentation: finds the most active stretches of a smoothed
/// energy envelope and centres a fixed-width window on each. May return fewer
/// than `count` windows when the recording has fewer active stretches.
std::vector<GestureSample> segment_by_energy(const Recording& recording,
                                             std::size_t count = kSamplesPerRecording,
                                             std::size_t width = kWindowWidth);

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> std;
};

struct DatasetSplit {
  std::vector<GestureSample> train;
  std::vector<GestureSample> test;
  NormalizationStats stats;  // computed on train only
  std::uint64_t seed = 0;
};

NormalizationStats compute_stats(std::span<const GestureSample> samples);

// Per-channel z-score with std floored at 1e-8.
GestureSample normalize(const GestureSample& sample, const NormalizationStats& stats);
void normalize_in_place(std::vector<GestureSample>& samples, const NormalizationStats& stats);

/// Seeded, per-label stratified split. Each label contributes
/// round(ratio * n_label) samples to train. Throws DataError when a label
/// ends up with no training samples.
DatasetSplit split(const std::vector<GestureSample>& samples, double ratio, std::uint64_t seed);

struct NoiseSpec {
  enum class Kind { gaussian };
  Kind kind = Kind::gaussian;
  double snr_db = 5.0;
  std::uint64_t seed = 0;
};

/// Adds white Gaussian noise whose power, per channel, is exactly
/// P_signal / 10^(snr_db / 10) over the window. A zero-power channel takes its
/// reference power from the whole window. `stream` decorrelates samples that
/// share a NoiseSpec.
GestureSample add_noise(const GestureSample& sample, const NoiseSpec& spec,
                        std::uint64_t stream = 0);
std::vector<GestureSample> add_noise(const std::vector<GestureSample>& samples,
                                     const NoiseSpec& spec);

/// Synthetic 8-channel windows for dataset-free runs. Class k is a mixture of
/// sinusoids near 20 + 10k Hz with a class-specific amplitude pattern across
/// channels, plus mild noise. Samples are class-major; subject_id counts
/// groups of 10 windows within a class.
std::vector<GestureSample> gen_synthetic(int num_classes, int samples_per_class,
                                         std::size_t width, std::uint64_t seed);

/// Synthetic one-minute recordings, one per (subject, gesture), laid out the
/// same way as real ones.
std::vector<Recording> synthesize_recordings(int subjects, std::uint64_t seed);

struct CorpusOptions {
  // "{label}" is replaced by the gesture label 0..7.
  std::string file_pattern = "{label}.txt";
  // Keep only the first N subjects in sorted order; 0 keeps all.
  std::size_t max_subjects = 0;
  LoadOptions load;
  bool energy_segmenter = false;
};

struct Corpus {
  std::vector<GestureSample> samples;
  std::vector<std::string> subjects;
  std::size_t recordings = 0;
};

/// Reads <root>/<subject>/<file_pattern> for every subject directory and
/// every gesture label. Subject directories sort numerically when all names
/// are integers, lexically otherwise; subject_id is the sorted position.
Corpus load_corpus(const std::filesystem::path& root, const CorpusOptions& options = {});

}  // namespace drsn
