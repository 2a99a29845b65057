#include "seiznet/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "seiznet/binary_io.hpp"
#include "seiznet/error.hpp"
#include "seiznet/random.hpp"

namespace seiznet::signal {

namespace {

constexpr char kMagic[4] = {'S', 'Z', 'N', '1'};
constexpr std::uint16_t kFormatVersion = 1;

std::size_t windows_in(double seconds) {
  return static_cast<std::size_t>(std::ceil(seconds / kWindowSeconds - 1e-9));
}

struct Biquad {
  double b0, b1, b2, a1, a2;  // a0 normalized to 1

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }

  // Transposed direct form II, state initialized to the steady state for a
  // constant input equal to x[0].
  void run(std::vector<double>& x) const {
    if (x.empty()) return;
    const double y0 = dc_gain() * x.front();
    double s2 = b2 * x.front() - a2 * y0;
    double s1 = b1 * x.front() - a1 * y0 + s2;
    for (double& v : x) {
      const double in = v;
      const double out = b0 * in + s1;
      s1 = b1 * in - a1 * out + s2;
      s2 = b2 * in - a2 * out;
      v = out;
    }
  }
};

Biquad normalized(double b0, double b1, double b2, double a0, double a1, double a2) {
  return {b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0};
}

Biquad notch(double f0, double fs, double q) {
  const double w0 = 2.0 * std::numbers::pi * f0 / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  return normalized(1.0, -2.0 * c, 1.0, 1.0 + alpha, -2.0 * c, 1.0 - alpha);
}

Biquad butter_lowpass(double fc, double fs) {
  const double w0 = 2.0 * std::numbers::pi * fc / fs;
  const double alpha = std::sin(w0) / std::numbers::sqrt2;  // Q = 1/sqrt(2)
  const double c = std::cos(w0);
  return normalized((1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0, 1.0 + alpha, -2.0 * c, 1.0 - alpha);
}

Biquad butter_highpass(double fc, double fs) {
  const double w0 = 2.0 * std::numbers::pi * fc / fs;
  const double alpha = std::sin(w0) / std::numbers::sqrt2;
  const double c = std::cos(w0);
  return normalized((1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0, 1.0 + alpha, -2.0 * c, 1.0 - alpha);
}

// Forward-backward filtering with odd-extension padding at both ends.
std::vector<float> filtfilt(std::span<const float> in, const std::vector<Biquad>& cascade) {
  const std::size_t n = in.size();
  if (n < 2) return {in.begin(), in.end()};
  const std::size_t pad = n - 1;
  std::vector<double> x(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) x[i] = 2.0 * in[0] - in[pad - i];
  for (std::size_t i = 0; i < n; ++i) x[pad + i] = in[i];
  for (std::size_t i = 0; i < pad; ++i) x[pad + n + i] = 2.0 * in[n - 1] - in[n - 2 - i];

  for (const auto& f : cascade) f.run(x);
  std::reverse(x.begin(), x.end());
  for (const auto& f : cascade) f.run(x);
  std::reverse(x.begin(), x.end());

  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(x[pad + i]);
  return out;
}

}  // namespace

std::string_view to_string(Modality m) {
  return m == Modality::ECG ? "ecg" : "ieeg";
}

Modality parse_modality(std::string_view s) {
  if (s == "ecg" || s == "ECG") return Modality::ECG;
  if (s == "ieeg" || s == "IEEG" || s == "iEEG") return Modality::IEEG;
  throw ConfigError("unknown modality '" + std::string(s) + "'");
}

double Recording::duration_s() const {
  return sample_rate_hz == 0 ? 0.0 : static_cast<double>(sample_count()) / sample_rate_hz;
}

void Recording::validate() const {
  if (sample_rate_hz == 0) throw ConfigError("sample_rate_hz must be positive");
  if (samples.empty()) throw ConfigError("recording has no channels");
  if (modality == Modality::ECG && samples.size() != 1)
    throw ConfigError("ECG recordings have exactly one channel, got " + std::to_string(samples.size()));
  for (const auto& ch : samples) {
    if (ch.size() != samples.front().size()) throw ConfigError("channels differ in length");
  }
  const double dur = duration_s();
  for (std::size_t i = 0; i < seizure_onsets.size(); ++i) {
    const double o = seizure_onsets[i];
    if (!(o >= 0.0 && o <= dur)) throw ConfigError("seizure onset " + std::to_string(o) + " outside recording");
    if (i > 0 && !(o > seizure_onsets[i - 1])) throw ConfigError("seizure onsets must be strictly increasing");
  }
}

Separability parse_separability(std::string_view s) {
  if (s == "subtle") return Separability::Subtle;
  if (s == "default") return Separability::Default;
  if (s == "separable") return Separability::Separable;
  throw ConfigError("separability must be subtle|default|separable, got '" + std::string(s) + "'");
}

GeneratorConfig GeneratorConfig::preset(Modality modality, Separability separability) {
  GeneratorConfig cfg;
  const int level = static_cast<int>(separability);  // 0 subtle, 1 default, 2 separable
  if (modality == Modality::ECG) {
    cfg.oscillation_hz = 1.25;
    cfg.oscillation_amplitude = 1.5;
    cfg.background_spectrum = {{0.5, 0.5}, {4.0, 0.2}, {16.0, 0.1}};
    constexpr double deltas[] = {0.25, 0.5, 1.0};
    constexpr double depths[] = {0.1, 0.3, 0.5};
    constexpr double noise[] = {0.4, 0.3, 0.15};
    cfg.preictal_shift = {depths[level], 0.25, deltas[level]};
    cfg.noise_floor = noise[level];
  } else {
    cfg.oscillation_hz = 6.0;
    cfg.oscillation_amplitude = 1.0;
    constexpr double deltas[] = {0.5, 2.0, 6.0};
    constexpr double depths[] = {0.1, 0.3, 0.5};
    constexpr double noise[] = {0.5, 0.3, 0.2};
    cfg.preictal_shift = {depths[level], 0.5, deltas[level]};
    cfg.noise_floor = noise[level];
  }
  return cfg;
}

void GeneratorConfig::validate() const {
  if (sample_rate_hz == 0) throw ConfigError("sample_rate_hz must be positive");
  if (!(imbalance_ratio >= kMinImbalanceRatio && imbalance_ratio <= kMaxImbalanceRatio))
    throw ConfigError("imbalance_ratio " + std::to_string(imbalance_ratio) + " outside [0.020, 0.233]");
  if (!(horizon_s > 0.0)) throw ConfigError("horizon_s must be positive");
  if (!(exclusion_s >= 0.0)) throw ConfigError("exclusion_s must be nonnegative");
  if (!(noise_floor >= 0.0)) throw ConfigError("noise_floor must be nonnegative");
  if (!(phase_diffusion >= 0.0)) throw ConfigError("phase_diffusion must be nonnegative");
  const double nyquist = sample_rate_hz / 2.0;
  if (!(oscillation_hz > 0.0 && oscillation_hz + preictal_shift.frequency_delta_hz < nyquist))
    throw ConfigError("patient oscillation (with preictal shift) must lie below Nyquist");
  if (!(preictal_shift.modulation_depth >= 0.0 && preictal_shift.modulation_depth <= 1.0))
    throw ConfigError("preictal modulation depth must be in [0, 1]");
  for (const auto& b : background_spectrum) {
    if (!(b.corner_hz > 0.0 && b.corner_hz < nyquist && b.power >= 0.0))
      throw ConfigError("background band needs 0 < corner < Nyquist and power >= 0");
  }
}

double recording_duration_for(const GeneratorConfig& cfg) {
  cfg.validate();
  if (cfg.onset_count == 0) throw ConfigError("recording_duration_for needs onset_count > 0");
  const auto horizon = windows_in(cfg.horizon_s);
  const auto exclusion = windows_in(cfg.exclusion_s);
  const auto interictal = static_cast<std::size_t>(std::llround(static_cast<double>(horizon) / cfg.imbalance_ratio));
  return static_cast<double>(cfg.onset_count * (horizon + exclusion + interictal)) * kWindowSeconds;
}

std::vector<double> place_onsets(const GeneratorConfig& cfg, double duration_s) {
  cfg.validate();
  if (!(duration_s > 0.0)) throw ConfigError("duration must be positive");
  if (cfg.onset_count == 0) return {};
  if (duration_s < 2.0 * cfg.horizon_s)
    throw ConfigError("duration must be at least twice the preictal horizon when onsets are requested");

  const auto k = static_cast<std::size_t>(cfg.onset_count);
  const auto total = static_cast<std::size_t>(duration_s / kWindowSeconds + 1e-9);
  const auto horizon = windows_in(cfg.horizon_s);
  const auto exclusion = windows_in(cfg.exclusion_s);
  const auto cycle = total / k;
  if (cycle < horizon + exclusion + 1)
    throw ConfigError("duration too short for " + std::to_string(k) + " onsets with full horizons");

  const auto interictal = total - k * (horizon + exclusion);
  const double ratio = static_cast<double>(k * horizon) / static_cast<double>(interictal);
  if (std::abs(ratio / cfg.imbalance_ratio - 1.0) > 0.05) {
    throw ConfigError("duration " + std::to_string(duration_s) + " s with " + std::to_string(k) +
                      " onsets gives preictal:interictal ratio " + std::to_string(ratio) + ", not within 5% of " +
                      std::to_string(cfg.imbalance_ratio) + " (see recording_duration_for)");
  }

  Rng rng(derive_seed(cfg.seed, stable_hash("onsets")));
  const auto slack = std::min(cycle - horizon - exclusion, cycle / 4);
  std::vector<double> onsets;
  onsets.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto jitter = static_cast<std::size_t>(uniform_index(rng, slack + 1));
    const auto window = i * cycle + cycle - exclusion - jitter;
    onsets.push_back(static_cast<double>(window) * kWindowSeconds);
  }
  return onsets;
}

Recording synthesize_recording(const GeneratorConfig& cfg, Modality modality, std::size_t channel_count,
                               double duration_s, std::span<const double> onsets) {
  cfg.validate();
  if (!(duration_s > 0.0)) throw ConfigError("duration must be positive");
  if (channel_count == 0) throw ConfigError("channel_count must be positive");
  if (modality == Modality::ECG && channel_count != 1)
    throw ConfigError("ECG recordings have exactly one channel, got " + std::to_string(channel_count));

  const double fs = cfg.sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));

  // Per-sample preictal mask from the onset schedule.
  std::vector<std::uint8_t> preictal(n, 0);
  for (double o : onsets) {
    const auto lo = static_cast<std::size_t>(std::clamp(std::ceil((o - cfg.horizon_s) * fs), 0.0, double(n)));
    const auto hi = static_cast<std::size_t>(std::clamp(std::ceil(o * fs), 0.0, double(n)));
    std::fill(preictal.begin() + lo, preictal.begin() + hi, 1);
  }

  Recording rec;
  rec.modality = modality;
  rec.sample_rate_hz = cfg.sample_rate_hz;
  rec.seizure_onsets.assign(onsets.begin(), onsets.end());
  rec.samples.resize(channel_count);

  const auto& shift = cfg.preictal_shift;
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t c = 0; c < channel_count; ++c) {
    Rng rng(derive_seed(cfg.seed, 1000 * static_cast<std::uint64_t>(modality) + c + 1));

    std::vector<double> coeff, gain, state;
    for (const auto& b : cfg.background_spectrum) {
      const double a = std::exp(-two_pi * b.corner_hz / fs);
      coeff.push_back(a);
      gain.push_back(std::sqrt((1.0 - a * a) * b.power));
      state.push_back(std::sqrt(b.power) * standard_normal(rng));
    }
    double phase = uniform(rng, 0.0, two_pi);
    double am_phase = uniform(rng, 0.0, two_pi);
    const double phase_step_sd = std::sqrt(cfg.phase_diffusion / fs);

    auto& out = rec.samples[c];
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double background = 0.0;
      for (std::size_t b = 0; b < state.size(); ++b) {
        state[b] = coeff[b] * state[b] + gain[b] * standard_normal(rng);
        background += state[b];
      }
      const bool pre = preictal[i] != 0;
      const double t = static_cast<double>(i) / fs;
      double amplitude = cfg.oscillation_amplitude;
      if (pre) amplitude *= 1.0 + shift.modulation_depth * std::sin(two_pi * shift.modulation_hz * t + am_phase);
      const double value = background + amplitude * std::sin(phase) + cfg.noise_floor * standard_normal(rng);
      out[i] = static_cast<float>(value);
      phase += two_pi * (cfg.oscillation_hz + (pre ? shift.frequency_delta_hz : 0.0)) / fs;
      if (phase_step_sd > 0.0) {
        phase += phase_step_sd * standard_normal(rng);
        am_phase += phase_step_sd * standard_normal(rng);
      }
      phase = std::remainder(phase, two_pi);
      am_phase = std::remainder(am_phase, two_pi);
    }
  }
  return rec;
}

Recording generate_recording(const GeneratorConfig& cfg, Modality modality, std::size_t channel_count,
                             double duration_s) {
  if (cfg.sample_rate_hz == 0) throw ConfigError("sample_rate_hz must be positive");
  if (!(duration_s > 0.0)) throw ConfigError("duration must be positive");
  const auto onsets = place_onsets(cfg, duration_s);
  return synthesize_recording(cfg, modality, channel_count, duration_s, onsets);
}

std::vector<WindowClass> classify_windows(std::span<const double> onsets, std::size_t window_count,
                                          double horizon_s, double exclusion_s) {
  if (!(horizon_s > 0.0)) throw ConfigError("horizon_s must be positive");
  if (!(exclusion_s >= 0.0)) throw ConfigError("exclusion_s must be nonnegative");
  std::vector<WindowClass> out(window_count, WindowClass::Interictal);
  for (std::size_t k = 0; k < window_count; ++k) {
    const double start = static_cast<double>(k) * kWindowSeconds;
    const double end = start + kWindowSeconds;
    bool excluded = false;
    bool pre = false;
    for (double o : onsets) {
      if (start < o + exclusion_s && end > o) excluded = true;
      if (o - horizon_s <= start && start < o) pre = true;
    }
    if (excluded) {
      out[k] = WindowClass::Excluded;
    } else if (pre) {
      out[k] = WindowClass::Preictal;
    }
  }
  return out;
}

std::size_t window_count(const Recording& rec) {
  const std::size_t per_window = static_cast<std::size_t>(kWindowSeconds) * rec.sample_rate_hz;
  return per_window == 0 ? 0 : rec.sample_count() / per_window;
}

SampleWindow extract_window(const Recording& rec, std::size_t index, Label label) {
  const std::size_t per_window = static_cast<std::size_t>(kWindowSeconds) * rec.sample_rate_hz;
  if (index >= window_count(rec)) throw ConfigError("window index out of range");
  SampleWindow w;
  w.start_time = static_cast<double>(index) * kWindowSeconds;
  w.sample_rate_hz = rec.sample_rate_hz;
  w.label = label;
  w.channels.reserve(rec.channel_count());
  for (const auto& ch : rec.samples) {
    const auto first = ch.begin() + static_cast<std::ptrdiff_t>(index * per_window);
    w.channels.emplace_back(first, first + static_cast<std::ptrdiff_t>(per_window));
  }
  return w;
}

std::vector<SampleWindow> label_windows(const Recording& rec, double horizon_s, double exclusion_s) {
  if (!(horizon_s > 0.0)) throw ConfigError("horizon_s must be positive");
  const auto classes = classify_windows(rec.seizure_onsets, window_count(rec), horizon_s, exclusion_s);
  std::vector<SampleWindow> out;
  out.reserve(classes.size());
  for (std::size_t k = 0; k < classes.size(); ++k) {
    if (classes[k] == WindowClass::Excluded) continue;
    out.push_back(extract_window(rec, k, classes[k] == WindowClass::Preictal ? Label::Preictal : Label::Interictal));
  }
  return out;
}

SampleWindow preprocess(const SampleWindow& w, const FilterConfig& filters) {
  if (!filters.notch_hz && !filters.band) return w;
  const double fs = w.sample_rate_hz;
  const double nyquist = fs / 2.0;
  std::vector<Biquad> cascade;
  if (filters.notch_hz) {
    const double f0 = *filters.notch_hz;
    if (!(f0 > 0.0 && f0 < nyquist)) throw ConfigError("notch frequency must be within (0, Nyquist)");
    if (!(filters.notch_q > 0.0)) throw ConfigError("notch Q must be positive");
    cascade.push_back(notch(f0, fs, filters.notch_q));
  }
  if (filters.band) {
    const auto [lo, hi] = *filters.band;
    if (!(lo > 0.0 && lo < hi && hi < nyquist))
      throw ConfigError("band-pass needs 0 < lo < hi < sample_rate/2, got [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
    cascade.push_back(butter_highpass(lo, fs));
    cascade.push_back(butter_lowpass(hi, fs));
  }
  SampleWindow out = w;
  for (auto& ch : out.channels) ch = filtfilt(ch, cascade);
  return out;
}

double band_power(std::span<const float> x, double sample_rate_hz, double freq_hz) {
  if (x.empty()) return 0.0;
  const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate_hz;
  const double coeff = 2.0 * std::cos(w);
  double s1 = 0.0, s2 = 0.0;
  for (float v : x) {
    const double s0 = v + coeff * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  const double power = s1 * s1 + s2 * s2 - coeff * s1 * s2;
  const double n = static_cast<double>(x.size());
  return 2.0 * power / (n * n);
}

SplitIndices split_indices(std::span<const Label> labels, std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<int>(labels[i])].push_back(i);
  for (const auto& c : by_class) {
    if (c.size() < 10)
      throw InsufficientDataError("each class needs at least 10 windows, got " + std::to_string(c.size()));
  }

  const std::size_t total = labels.size();
  // Exact overall part sizes, apportioned across classes by largest remainder.
  auto apportion = [&](double fraction) {
    const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
    std::size_t quota[2];
    double rem[2];
    std::size_t assigned = 0;
    for (int c = 0; c < 2; ++c) {
      const double share = fraction * static_cast<double>(by_class[c].size());
      quota[c] = static_cast<std::size_t>(std::floor(share));
      rem[c] = share - std::floor(share);
      assigned += quota[c];
    }
    while (assigned < target) {
      const int c = rem[1] > rem[0] ? 1 : 0;
      ++quota[c];
      rem[c] = -1.0;
      ++assigned;
    }
    return std::pair{quota[0], quota[1]};
  };
  const auto test_q = apportion(DatasetSplit::kTestFraction);
  const auto val_q = apportion(DatasetSplit::kValidationFraction);

  SplitIndices out;
  for (int c = 0; c < 2; ++c) {
    auto idx = by_class[c];
    Rng rng(derive_seed(seed, 0x5011 + static_cast<std::uint64_t>(c)));
    shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_test = c == 0 ? test_q.first : test_q.second;
    const std::size_t n_val = c == 0 ? val_q.first : val_q.second;
    out.test.insert(out.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.validation.insert(out.validation.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test),
                          idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
    out.train.insert(out.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

DatasetSplit split_dataset(std::span<const SampleWindow> windows, std::uint64_t seed) {
  std::vector<Label> labels;
  labels.reserve(windows.size());
  for (const auto& w : windows) labels.push_back(w.label);
  const auto idx = split_indices(labels, seed);
  DatasetSplit out;
  for (auto i : idx.train) out.train.push_back(windows[i]);
  for (auto i : idx.validation) out.validation.push_back(windows[i]);
  for (auto i : idx.test) out.test.push_back(windows[i]);
  return out;
}

std::vector<SampleWindow> explode_channels(std::span<const SampleWindow> windows) {
  std::vector<SampleWindow> out;
  for (const auto& w : windows) {
    for (const auto& ch : w.channels) {
      SampleWindow single;
      single.start_time = w.start_time;
      single.sample_rate_hz = w.sample_rate_hz;
      single.label = w.label;
      single.channels.push_back(ch);
      out.push_back(std::move(single));
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_recording(const Recording& rec) {
  rec.validate();
  if (rec.channel_count() > UINT16_MAX) throw ConfigError("too many channels for the recording format");
  io::Writer w;
  w.raw({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
  w.u16(kFormatVersion);
  w.u8(static_cast<std::uint8_t>(rec.modality));
  w.u16(static_cast<std::uint16_t>(rec.channel_count()));
  w.u32(rec.sample_rate_hz);
  w.u64(rec.sample_count());
  w.u32(static_cast<std::uint32_t>(rec.seizure_onsets.size()));
  for (double o : rec.seizure_onsets) w.f64(o);
  for (const auto& ch : rec.samples) {
    for (float v : ch) w.f32(v);
  }
  w.seal();
  return w.bytes();
}

Recording decode_recording(std::span<const std::uint8_t> bytes, std::string patient_id) {
  io::Reader r(bytes);
  r.require(4, "magic");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("bad magic, expected \"SZN1\"", 0);
  for (int i = 0; i < 4; ++i) r.u8("magic");

  const auto version_at = r.offset();
  if (const auto version = r.u16("version"); version != kFormatVersion)
    throw FormatError("unsupported format version " + std::to_string(version), version_at);

  Recording rec;
  rec.patient_id = std::move(patient_id);
  const auto modality_at = r.offset();
  const auto modality = r.u8("modality");
  if (modality > 1) throw FormatError("invalid modality code " + std::to_string(modality), modality_at);
  rec.modality = static_cast<Modality>(modality);

  const auto channels_at = r.offset();
  const auto channels = r.u16("channel_count");
  if (channels == 0) throw FormatError("channel_count must be positive", channels_at);
  if (rec.modality == Modality::ECG && channels != 1)
    throw FormatError("ECG recording with " + std::to_string(channels) + " channels", channels_at);

  const auto rate_at = r.offset();
  rec.sample_rate_hz = r.u32("sample_rate_hz");
  if (rec.sample_rate_hz == 0) throw FormatError("sample_rate_hz must be positive", rate_at);

  const auto samples = r.u64("sample_count");
  const auto onset_count = r.u32("onset_count");
  r.require(std::uint64_t{onset_count} * 8, "onsets");
  rec.seizure_onsets.resize(onset_count);
  for (auto& o : rec.seizure_onsets) o = r.f64("onset");

  const std::uint64_t per_channel = 4;
  if (samples > r.remaining() / (per_channel * channels)) {
    // Overflow-safe form of the byte-count check; report the exact figures.
    const long double expected = static_cast<long double>(samples) * per_channel * channels;
    throw FormatError("truncated payload: expected " + std::to_string(static_cast<unsigned long long>(expected)) +
                          " sample bytes, found " + std::to_string(r.remaining()),
                      r.offset());
  }
  rec.samples.assign(channels, std::vector<float>(samples));
  for (auto& ch : rec.samples) {
    for (auto& v : ch) v = r.f32("sample");
  }
  const auto crc_at = r.offset();
  r.check_crc();
  try {
    rec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(e.what(), crc_at);
  }
  return rec;
}

void save_recording(const Recording& rec, const std::filesystem::path& path) {
  const auto bytes = encode_recording(rec);
  io::write_file_atomic(path, bytes);
}

Recording load_recording(const std::filesystem::path& path, std::optional<std::string> patient_id) {
  const auto bytes = io::read_file(path);
  return decode_recording(bytes, patient_id ? *patient_id : path.stem().string());
}

}  // namespace seiznet::signal
