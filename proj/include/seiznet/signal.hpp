#pragma once

// Synthetic ECG / iEEG recordings, 4 s window labeling, optional filtering,
// stratified dataset splits and the SZN1 recording file format.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace seiznet::signal {

inline constexpr double kWindowSeconds = 4.0;
inline constexpr double kDefaultHorizonSeconds = 3600.0;
inline constexpr double kDefaultExclusionSeconds = 600.0;
inline constexpr std::uint32_t kDefaultSampleRateHz = 256;

// Observed per-patient range of preictal:interictal sample ratios.
inline constexpr double kMinImbalanceRatio = 0.020;
inline constexpr double kMaxImbalanceRatio = 0.233;
inline constexpr double kDefaultImbalanceRatio = 0.0826;

enum class Modality : std::uint8_t { ECG = 0, IEEG = 1 };
enum class Label : std::uint8_t { Interictal = 0, Preictal = 1 };

/// Per-window status on the recording clock; Excluded windows overlap a
/// seizure or its postictal period and are never scored.
enum class WindowClass : std::uint8_t { Interictal, Preictal, Excluded };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);

struct Recording {
  std::string patient_id;
  Modality modality = Modality::ECG;
  std::uint32_t sample_rate_hz = kDefaultSampleRateHz;
  std::vector<std::vector<float>> samples;  // [channel][sample]
  std::vector<double> seizure_onsets;       // seconds from start

  std::size_t channel_count() const { return samples.size(); }
  std::size_t sample_count() const { return samples.empty() ? 0 : samples.front().size(); }
  double duration_s() const;

  /// Throws ConfigError on a broken invariant.
  void validate() const;

  bool operator==(const Recording&) const = default;
};

struct SampleWindow {
  double start_time = 0.0;
  std::uint32_t sample_rate_hz = kDefaultSampleRateHz;
  std::vector<std::vector<float>> channels;  // [channel][4 * sample_rate_hz]
  Label label = Label::Interictal;

  static constexpr double duration = kWindowSeconds;

  std::size_t channel_count() const { return channels.size(); }
  std::size_t samples_per_channel() const { return channels.empty() ? 0 : channels.front().size(); }

  bool operator==(const SampleWindow&) const = default;
};

/// One low-pass AR(1) component of the colored background; summing a few
/// with falling power and rising corner gives an approximately 1/f spectrum.
struct BackgroundBand {
  double corner_hz = 1.0;
  double power = 1.0;
};

/// What distinguishes preictal signal from interictal signal.
struct PreictalShift {
  double modulation_depth = 0.3;   // amplitude modulation depth in [0, 1]
  double modulation_hz = 0.5;      // amplitude modulation rate
  double frequency_delta_hz = 2.0; // shift of the patient oscillation
};

enum class Separability : std::uint8_t { Subtle, Default, Separable };

/// "subtle", "default" or "separable".
Separability parse_separability(std::string_view s);

struct GeneratorConfig {
  std::uint64_t seed = 0;
  double imbalance_ratio = kDefaultImbalanceRatio;
  std::uint32_t onset_count = 0;
  std::uint32_t sample_rate_hz = kDefaultSampleRateHz;
  std::vector<BackgroundBand> background_spectrum{{1.0, 1.0}, {4.0, 0.5}, {16.0, 0.25}};
  double oscillation_hz = 6.0;
  double oscillation_amplitude = 1.0;
  PreictalShift preictal_shift{};
  double noise_floor = 0.2;
  // Random-walk phase noise (rad^2/s) on the oscillation and its modulation,
  // so neither stays phase-locked to the 4 s window grid.
  double phase_diffusion = 1.0;
  double horizon_s = kDefaultHorizonSeconds;
  double exclusion_s = kDefaultExclusionSeconds;

  /// Modality-specific oscillation (heart rhythm for ECG, cortical rhythm
  /// for iEEG) with a preictal shift of the requested strength.
  static GeneratorConfig preset(Modality modality, Separability separability);

  void validate() const;
};

/// Duration (multiple of 4 s) in which `onset_count` seizures realize the
/// configured preictal:interictal window ratio.
double recording_duration_for(const GeneratorConfig& cfg);

/// Onset times on the 4 s grid, one per equal-length cycle of the recording,
/// each preceded by a full horizon and followed by the exclusion period.
/// Throws ConfigError if the duration cannot realize cfg.imbalance_ratio
/// within 5% relative.
std::vector<double> place_onsets(const GeneratorConfig& cfg, double duration_s);

/// Signal synthesis for a given onset schedule. ECG and iEEG recordings of
/// one patient share the schedule.
Recording synthesize_recording(const GeneratorConfig& cfg, Modality modality, std::size_t channel_count,
                               double duration_s, std::span<const double> onsets);

Recording generate_recording(const GeneratorConfig& cfg, Modality modality, std::size_t channel_count,
                             double duration_s);

/// Status of each of the first `window_count` 4 s windows (window k starts
/// at 4k seconds).
std::vector<WindowClass> classify_windows(std::span<const double> onsets, std::size_t window_count,
                                          double horizon_s = kDefaultHorizonSeconds,
                                          double exclusion_s = kDefaultExclusionSeconds);

/// Number of complete 4 s windows in the recording.
std::size_t window_count(const Recording& rec);

SampleWindow extract_window(const Recording& rec, std::size_t index, Label label);

std::vector<SampleWindow> label_windows(const Recording& rec, double horizon_s = kDefaultHorizonSeconds,
                                        double exclusion_s = kDefaultExclusionSeconds);

struct FilterConfig {
  std::optional<double> notch_hz;
  std::optional<std::pair<double, double>> band;  // [lo_hz, hi_hz]
  double notch_q = 10.0;
};

/// Zero-phase (forward-backward) notch and/or band-pass. Default config is
/// the identity.
SampleWindow preprocess(const SampleWindow& w, const FilterConfig& filters = {});

/// Goertzel power of `x` at `freq_hz`, normalized by length.
double band_power(std::span<const float> x, double sample_rate_hz, double freq_hz);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Stratified 80/10/10 split of window indices, each part in ascending order.
SplitIndices split_indices(std::span<const Label> labels, std::uint64_t seed);

struct DatasetSplit {
  std::vector<SampleWindow> train;
  std::vector<SampleWindow> validation;
  std::vector<SampleWindow> test;

  static constexpr double kTrainFraction = 0.8;
  static constexpr double kValidationFraction = 0.1;
  static constexpr double kTestFraction = 0.1;
};

DatasetSplit split_dataset(std::span<const SampleWindow> windows, std::uint64_t seed);

/// Splits every multi-channel window into single-channel windows with the
/// same label (per-channel classifiers).
std::vector<SampleWindow> explode_channels(std::span<const SampleWindow> windows);

void save_recording(const Recording& rec, const std::filesystem::path& path);

/// The file carries no patient id; it defaults to the file stem.
Recording load_recording(const std::filesystem::path& path, std::optional<std::string> patient_id = std::nullopt);

std::vector<std::uint8_t> encode_recording(const Recording& rec);
Recording decode_recording(std::span<const std::uint8_t> bytes, std::string patient_id);

}  // namespace seiznet::signal
