#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "earlycast/lstm_model.hpp"
#include "earlycast/rng.hpp"
#include "earlycast/tensor.hpp"

namespace earlycast {

// Column layout of a frame: nine markers (shoulder, elbow, wrist, hand base,
// five fingertips) as x/y pairs, then the ball center.
inline constexpr std::size_t kMarkerCount = 9;
inline constexpr std::size_t kMarkerColumns = 2 * kMarkerCount;
inline constexpr std::size_t kFeatureCount = kMarkerColumns + 2;
inline constexpr std::size_t kHandBaseX = 6;
inline constexpr std::size_t kHandBaseY = 7;
inline constexpr std::size_t kBallX = 18;
inline constexpr std::size_t kBallY = 19;
inline constexpr std::size_t kSequenceLength = 60;
inline constexpr double kFrameMs = 10.0;

/// Column name ("m1x" ... "m9y", "ballx", "bally").
std::string feature_name(std::size_t column);

enum class HandSide { kLeft, kRight };
enum class DropKind { kCatch, kJumpOff, kMiss, kUnknown };

std::string_view hand_side_name(HandSide side);
std::string_view drop_kind_name(DropKind kind);
std::optional<DropKind> parse_drop_kind(std::string_view name);

struct RawTrial {
  std::uint64_t trial_id = 0;
  Tensor frames;  // [L x 20], absolute coordinates
  int label = 0;  // 1 catch, 0 drop
  HandSide hand_side = HandSide::kRight;
  std::size_t contact_frame = 0;
  DropKind drop_kind = DropKind::kUnknown;

  std::size_t length() const { return frames.dim(0); }
  bool operator==(const RawTrial&) const = default;
};

struct ProcessedTrial {
  std::uint64_t trial_id = 0;
  Tensor features;  // [60 x 20] frame differences, normalized once normalize() ran
  int label = 0;
  HandSide hand_side = HandSide::kRight;
  DropKind drop_kind = DropKind::kUnknown;
  /// [60 x 4] absolute hand base (x, y) and ball (x, y) at the end of each
  /// difference interval.
  Tensor absolute_tail;
  std::size_t contact_frame = 0;
};

template <typename T>
struct Range {
  T lo;
  T hi;
};

struct SynthConfig {
  std::size_t trial_count = 1975;
  double success_ratio = 1082.0 / 1975.0;
  double jump_off_fraction = 0.6;
  double left_fraction = 1010.0 / 1975.0;
  std::uint64_t seed = 0;

  double gravity = 2500.0;  // units / s^2, y grows downward
  double frame_rate = 100.0;
  Range<double> launch_x{120.0, 180.0};
  Range<double> launch_y{400.0, 480.0};
  Range<int> flight_frames{45, 60};
  Range<double> intercept_x{470.0, 560.0};
  Range<double> intercept_y{420.0, 520.0};

  Range<double> shoulder_x{700.0, 740.0};
  Range<double> shoulder_y{500.0, 540.0};
  double sway_amplitude = 3.0;
  Range<double> upper_arm{140.0, 160.0};
  Range<double> forearm{130.0, 150.0};
  double hand_length = 40.0;
  Range<double> finger_scale{0.85, 1.15};
  Range<double> rest_offset_x{-45.0, -15.0};
  Range<double> rest_offset_y{170.0, 200.0};

  /// Reach durations in frames; the reach ends at first contact.
  Range<int> catch_reach{26, 40};
  Range<int> jump_off_reach{18, 30};
  Range<int> miss_reach{14, 24};
  double reach_noise = 2.5;
  Range<double> miss_offset{60.0, 110.0};
  Range<double> restitution{0.3, 0.6};
  double capture_radius = 30.0;
  double palm_offset = 18.0;

  double marker_noise = 1.5;
  double ball_noise = 1.0;
  Range<int> raw_length{61, 91};
  std::size_t contact_target = 40;
  int contact_jitter = 2;

  void validate() const;
  /// Canonical key=value rendering used for hashing and manifests.
  std::string canonical() const;
  std::uint64_t hash() const { return stable_hash(canonical()); }
};

struct PreprocessConfig {
  std::size_t savgol_window = 7;
  std::size_t savgol_order = 3;
  std::size_t length = kSequenceLength;
};

/// Draws one trial. `rng` should be the trial's own stream.
RawTrial generate_trial(const SynthConfig& config, Rng& rng, int label, DropKind kind, std::uint64_t trial_id);

/// Exact class counts: round(N * success_ratio) catches, round(0.6 * drops)
/// jump-offs, the rest misses, assigned to trial ids by a seeded shuffle.
/// Trial i draws from stream i of the master seed, so output does not
/// depend on generation order.
std::vector<RawTrial> generate_dataset(const SynthConfig& config);

/// Euclidean hand-base/ball distance of raw frame t.
double raw_ball_hand_distance(const RawTrial& trial, std::size_t t);

/// Savitzky-Golay smoothing of columns [0, columns) of `series`.
/// Near the edges the fit uses the window shifted inside the series.
Tensor savgol_smooth(const Tensor& series, std::size_t window, std::size_t order, std::size_t columns);
/// Filter weights for evaluating the fit at `position` within the window.
std::vector<double> savgol_weights(std::size_t window, std::size_t order, std::size_t position);

/// out[t] = in[t + 1] - in[t].
Tensor to_relative(const Tensor& series);

/// Keeps the last `length` frames. Returns the number of dropped frames.
std::size_t truncate_frames(const Tensor& series, std::size_t length, Tensor& out);

/// smooth, difference and truncate one raw trial (no normalization).
ProcessedTrial preprocess_trial(const RawTrial& trial, const PreprocessConfig& config = {});
std::vector<ProcessedTrial> preprocess_all(std::span<const RawTrial> trials, const PreprocessConfig& config = {});

struct DatasetSplit {
  std::vector<ProcessedTrial> train;
  std::vector<ProcessedTrial> validation;
  std::vector<ProcessedTrial> test;
};

/// Random 60/20/20 partition: floor(0.6 N) training trials, the remainder
/// halved with the odd trial going to test. Label blind.
DatasetSplit split_dataset(std::vector<ProcessedTrial> trials, Rng& rng);
std::array<std::size_t, 3> split_sizes(std::size_t n);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population standard deviation

  void apply(Tensor& features) const;
  void invert(Tensor& features) const;
};

/// Per-feature statistics over every frame of every training trial.
NormStats compute_norm_stats(std::span<const ProcessedTrial> train);
/// Normalizes all three splits with training statistics.
NormStats normalize(DatasetSplit& split);

/// Stacks trials into a [N x T x F] batch with their labels.
SequenceBatch to_batch(std::span<const ProcessedTrial> trials);

/// Hash of trial ids and feature bytes; equal splits hash equally.
std::uint64_t split_hash(std::span<const ProcessedTrial> trials);

/// Ball-hand distance at processed frame t.
double ball_hand_distance(const ProcessedTrial& trial, std::size_t t);

void write_trials(const std::filesystem::path& path, std::span<const RawTrial> trials);
/// Reads the trial CSV. drop_kind is kCatch for label 1 and kUnknown otherwise.
std::vector<RawTrial> read_trials(const std::filesystem::path& path);

/// Dataset directory: trials.csv plus manifest.json (seed, config hash,
/// per-trial drop kinds).
void write_dataset(const std::filesystem::path& dir, std::span<const RawTrial> trials, const SynthConfig& config);
std::vector<RawTrial> read_dataset(const std::filesystem::path& dir);

}  // namespace earlycast
