#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <sstream>

#include "earlycast/data.hpp"
#include "earlycast/error.hpp"

namespace earlycast {

namespace {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
double norm(Vec2 a) { return std::hypot(a.x, a.y); }
Vec2 unit(Vec2 a) { return (1.0 / norm(a)) * a; }
Vec2 rotate(Vec2 a, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * a.x - s * a.y, s * a.x + c * a.y};
}

double min_jerk(double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  return tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
}

Vec2 lerp(Vec2 a, Vec2 b, double s) { return a + s * (b - a); }

int uniform_int(Rng& rng, Range<int> r) {
  return r.lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(r.hi - r.lo + 1)));
}

double uniform(Rng& rng, Range<double> r) { return rng.uniform(r.lo, r.hi); }

// Rounds to the 9 significant digits the trial CSV stores, so a written
// dataset reads back bit for bit.
double quantize(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

constexpr std::array<double, 5> kFingerAngle{-0.55, -0.25, 0.0, 0.22, 0.45};
constexpr std::array<double, 5> kFingerLength{48.0, 68.0, 74.0, 69.0, 55.0};
constexpr double kMirrorWidth = 1000.0;

struct Attempt {
  Tensor frames;
  const char* violated = nullptr;
};

Attempt attempt_trial(const SynthConfig& cfg, Rng& rng, DropKind kind, std::size_t length, std::size_t contact) {
  const double dt = 1.0 / cfg.frame_rate;
  const double g = cfg.gravity;
  const auto c = static_cast<double>(contact);

  const Vec2 shoulder0{uniform(rng, cfg.shoulder_x), uniform(rng, cfg.shoulder_y)};
  const double sway_w = 2.0 * std::numbers::pi / rng.uniform(80.0, 150.0);
  const double sway_p1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double sway_p2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double l1 = uniform(rng, cfg.upper_arm);
  const double l2 = uniform(rng, cfg.forearm);
  const double finger_scale = uniform(rng, cfg.finger_scale);

  const Vec2 intercept{uniform(rng, cfg.intercept_x), uniform(rng, cfg.intercept_y)};
  const Vec2 launch{uniform(rng, cfg.launch_x), uniform(rng, cfg.launch_y)};
  const int flight = uniform_int(rng, cfg.flight_frames);
  const double flight_s = flight * dt;
  const Vec2 v0{(intercept.x - launch.x) / flight_s, (intercept.y - launch.y - 0.5 * g * flight_s * flight_s) / flight_s};
  const Vec2 v_in{v0.x, v0.y + g * flight_s};
  const double launch_frame = c - flight;
  auto free_ball = [&](double t) {
    const double tau = std::max(0.0, (t - launch_frame) * dt);
    return Vec2{launch.x + v0.x * tau, launch.y + v0.y * tau + 0.5 * g * tau * tau};
  };

  const Vec2 rest = shoulder0 + Vec2{uniform(rng, cfg.rest_offset_x), uniform(rng, cfg.rest_offset_y)};
  const Range<int> reach_window = kind == DropKind::kCatch     ? cfg.catch_reach
                                  : kind == DropKind::kJumpOff ? cfg.jump_off_reach
                                                               : cfg.miss_reach;
  const double reach = uniform_int(rng, reach_window);
  const double onset = c - reach;
  const Vec2 toward = unit(intercept - shoulder0);

  Vec2 target;
  if (kind == DropKind::kMiss) {
    Vec2 side = unit(Vec2{-v_in.y, v_in.x});
    if (rng.bernoulli(0.5)) side = -1.0 * side;
    target = intercept + uniform(rng, cfg.miss_offset) * side;
  } else {
    target = intercept - cfg.palm_offset * toward +
             Vec2{rng.normal(0.0, cfg.reach_noise), rng.normal(0.0, cfg.reach_noise)};
  }
  // After the reach: catches pull the ball toward the body, the other kinds
  // drift back a little.
  const double follow = rng.uniform(15.0, 25.0);
  const Vec2 pull = kind == DropKind::kCatch ? Vec2{rng.uniform(25.0, 45.0), rng.uniform(15.0, 35.0)}
                                             : Vec2{rng.uniform(5.0, 15.0), rng.uniform(5.0, 20.0)};
  const double restitution = uniform(rng, cfg.restitution);
  const Vec2 v_out = rotate(-restitution * v_in, rng.uniform(-0.7, 0.7));
  const double open_after = kind == DropKind::kCatch ? 0.25 : kind == DropKind::kJumpOff ? 0.8 : 0.9;

  Attempt out;
  out.frames = Tensor(Shape{length, kFeatureCount});
  double min_miss_distance = 1e300;
  for (std::size_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(i);
    const Vec2 shoulder = shoulder0 + Vec2{cfg.sway_amplitude * std::sin(sway_w * t + sway_p1),
                                           0.5 * cfg.sway_amplitude * std::sin(0.7 * sway_w * t + sway_p2)};
    Vec2 hand;
    double aperture;
    if (t <= c) {
      const double s = min_jerk((t - onset) / reach);
      hand = lerp(rest, target, s);
      aperture = 0.35 + 0.65 * s;
    } else {
      hand = target + min_jerk((t - c) / follow) * pull;
      aperture = 1.0 + (open_after - 1.0) * min_jerk((t - c) / 8.0);
    }

    const Vec2 dir = unit(hand - shoulder);
    const Vec2 wrist = hand - cfg.hand_length * dir;
    const double d = norm(wrist - shoulder);
    if (d > l1 + l2 - 1.0 || d < std::abs(l1 - l2) + 1.0) {
      out.violated = "arm reach";
      return out;
    }
    const double a = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d);
    const double h = std::sqrt(std::max(0.0, l1 * l1 - a * a));
    const Vec2 along = unit(wrist - shoulder);
    const Vec2 base = shoulder + a * along;
    Vec2 elbow = base + h * Vec2{-along.y, along.x};
    const Vec2 other = base - h * Vec2{-along.y, along.x};
    if (other.y > elbow.y) elbow = other;

    Vec2 ball;
    if (t <= c || kind == DropKind::kMiss) {
      ball = free_ball(t);
    } else if (kind == DropKind::kCatch) {
      ball = hand + cfg.palm_offset * dir;
    } else {
      const double tau = (t - c) * dt;
      ball = intercept + Vec2{v_out.x * tau, v_out.y * tau + 0.5 * g * tau * tau};
    }

    double* row = out.frames.raw() + i * kFeatureCount;
    const std::array<Vec2, 4> joints{shoulder, elbow, wrist, hand};
    for (std::size_t j = 0; j < joints.size(); ++j) {
      row[2 * j] = joints[j].x;
      row[2 * j + 1] = joints[j].y;
    }
    for (std::size_t f = 0; f < kFingerAngle.size(); ++f) {
      const Vec2 tip = hand + (finger_scale * kFingerLength[f]) * rotate(dir, aperture * kFingerAngle[f]);
      row[8 + 2 * f] = tip.x;
      row[9 + 2 * f] = tip.y;
    }
    row[kBallX] = ball.x;
    row[kBallY] = ball.y;
    min_miss_distance = std::min(min_miss_distance, norm(ball - hand));
    if (i == contact && kind != DropKind::kMiss && norm(ball - hand) >= cfg.capture_radius) {
      out.violated = "capture radius at contact";
      return out;
    }
  }
  const double* last = out.frames.raw() + (length - 1) * kFeatureCount;
  const double final_distance = std::hypot(last[kBallX] - last[kHandBaseX], last[kBallY] - last[kHandBaseY]);
  if (kind == DropKind::kMiss && min_miss_distance <= cfg.capture_radius) out.violated = "miss clearance";
  if (kind == DropKind::kJumpOff && final_distance <= cfg.capture_radius) out.violated = "rebound clearance";
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  auto ratio_ok = [](double r) { return r > 0.0 && r < 1.0; };
  if (trial_count == 0) throw Error("trial count must be positive");
  if (!ratio_ok(success_ratio) || !ratio_ok(jump_off_fraction) || !(left_fraction >= 0.0 && left_fraction <= 1.0)) {
    throw Error("class and side ratios must lie in (0, 1)");
  }
  auto window_ok = [](auto r) { return r.lo <= r.hi; };
  if (!window_ok(launch_x) || !window_ok(launch_y) || !window_ok(flight_frames) || !window_ok(intercept_x) ||
      !window_ok(intercept_y) || !window_ok(shoulder_x) || !window_ok(shoulder_y) || !window_ok(upper_arm) ||
      !window_ok(forearm) || !window_ok(finger_scale) || !window_ok(rest_offset_x) || !window_ok(rest_offset_y) ||
      !window_ok(catch_reach) || !window_ok(jump_off_reach) || !window_ok(miss_reach) || !window_ok(miss_offset) ||
      !window_ok(restitution) || !window_ok(raw_length)) {
    throw Error("synthetic config has an empty window");
  }
  if (raw_length.lo < static_cast<int>(kSequenceLength) + 1) {
    throw Error("raw trials need at least " + std::to_string(kSequenceLength + 1) + " frames");
  }
  if (contact_target < static_cast<std::size_t>(contact_jitter) ||
      contact_target + static_cast<std::size_t>(contact_jitter) >= kSequenceLength) {
    throw Error("contact target out of range");
  }
  if (catch_reach.lo < 1 || jump_off_reach.lo < 1 || miss_reach.lo < 1 || flight_frames.lo < 1) {
    throw Error("durations must be at least one frame");
  }
}

std::string SynthConfig::canonical() const {
  std::ostringstream out;
  out.precision(17);
  auto range = [&](const char* key, auto r) { out << key << '=' << r.lo << ',' << r.hi << '\n'; };
  out << "trial_count=" << trial_count << '\n'
      << "success_ratio=" << success_ratio << '\n'
      << "jump_off_fraction=" << jump_off_fraction << '\n'
      << "left_fraction=" << left_fraction << '\n'
      << "seed=" << seed << '\n'
      << "gravity=" << gravity << '\n'
      << "frame_rate=" << frame_rate << '\n';
  range("launch_x", launch_x);
  range("launch_y", launch_y);
  range("flight_frames", flight_frames);
  range("intercept_x", intercept_x);
  range("intercept_y", intercept_y);
  range("shoulder_x", shoulder_x);
  range("shoulder_y", shoulder_y);
  out << "sway_amplitude=" << sway_amplitude << '\n';
  range("upper_arm", upper_arm);
  range("forearm", forearm);
  out << "hand_length=" << hand_length << '\n';
  range("finger_scale", finger_scale);
  range("rest_offset_x", rest_offset_x);
  range("rest_offset_y", rest_offset_y);
  range("catch_reach", catch_reach);
  range("jump_off_reach", jump_off_reach);
  range("miss_reach", miss_reach);
  out << "reach_noise=" << reach_noise << '\n';
  range("miss_offset", miss_offset);
  range("restitution", restitution);
  out << "capture_radius=" << capture_radius << '\n'
      << "palm_offset=" << palm_offset << '\n'
      << "marker_noise=" << marker_noise << '\n'
      << "ball_noise=" << ball_noise << '\n';
  range("raw_length", raw_length);
  out << "contact_target=" << contact_target << '\n' << "contact_jitter=" << contact_jitter << '\n';
  return out.str();
}

RawTrial generate_trial(const SynthConfig& config, Rng& rng, int label, DropKind kind, std::uint64_t trial_id) {
  if ((label == 1) != (kind == DropKind::kCatch) || kind == DropKind::kUnknown) {
    throw Error("label " + std::to_string(label) + " does not match drop kind " + std::string(drop_kind_name(kind)));
  }
  RawTrial trial;
  trial.trial_id = trial_id;
  trial.label = label;
  trial.drop_kind = kind;
  trial.hand_side = rng.bernoulli(config.left_fraction) ? HandSide::kLeft : HandSide::kRight;
  const auto length = static_cast<std::size_t>(uniform_int(rng, config.raw_length));
  const int jitter = uniform_int(rng, {-config.contact_jitter, config.contact_jitter});
  // Differencing drops one frame and truncation keeps the last 60, so raw
  // frame c lands on processed frame c - length + 60.
  trial.contact_frame = static_cast<std::size_t>(static_cast<long>(length - kSequenceLength + config.contact_target) +
                                                 jitter);

  const char* violated = nullptr;
  for (int attempt = 0; attempt < 100; ++attempt) {
    Attempt a = attempt_trial(config, rng, kind, length, trial.contact_frame);
    violated = a.violated;
    if (violated) continue;
    for (std::size_t i = 0; i < length; ++i) {
      double* row = a.frames.raw() + i * kFeatureCount;
      for (std::size_t j = 0; j < kMarkerColumns; ++j) row[j] += rng.normal(0.0, config.marker_noise);
      row[kBallX] += rng.normal(0.0, config.ball_noise);
      row[kBallY] += rng.normal(0.0, config.ball_noise);
      if (trial.hand_side == HandSide::kLeft) {
        for (std::size_t j = 0; j < kFeatureCount; j += 2) row[j] = kMirrorWidth - row[j];
      }
      for (std::size_t j = 0; j < kFeatureCount; ++j) row[j] = quantize(row[j]);
    }
    trial.frames = std::move(a.frames);
    // The guarantees must hold on the recorded (noisy) coordinates.
    for (std::size_t i = 0; i < length && !violated; ++i) {
      const double d = raw_ball_hand_distance(trial, i);
      if (kind == DropKind::kCatch && i >= trial.contact_frame && d >= config.capture_radius) violated = "catch hold";
      if (kind == DropKind::kMiss && d <= config.capture_radius) violated = "miss clearance";
    }
    if (!violated) break;
  }
  if (violated) {
    throw DataError("trial " + std::to_string(trial_id) + ": no feasible kinematics after 100 attempts (constraint: " +
                    violated + ")");
  }
  return trial;
}

std::vector<RawTrial> generate_dataset(const SynthConfig& config) {
  config.validate();
  const std::size_t n = config.trial_count;
  const auto n_catch = static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.success_ratio));
  const std::size_t n_drop = n - n_catch;
  const auto n_jump = static_cast<std::size_t>(std::llround(static_cast<double>(n_drop) * config.jump_off_fraction));
  std::vector<DropKind> kinds(n, DropKind::kMiss);
  std::fill_n(kinds.begin(), n_catch, DropKind::kCatch);
  std::fill_n(kinds.begin() + static_cast<std::ptrdiff_t>(n_catch), n_jump, DropKind::kJumpOff);

  const Rng master(config.seed);
  Rng assign = master.split(stable_hash("class-assignment"));
  assign.shuffle(kinds);

  std::vector<RawTrial> trials;
  trials.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = master.split(i);
    trials.push_back(generate_trial(config, rng, kinds[i] == DropKind::kCatch ? 1 : 0, kinds[i], i));
  }
  return trials;
}

double raw_ball_hand_distance(const RawTrial& trial, std::size_t t) {
  if (t >= trial.length()) throw Error("frame " + std::to_string(t) + " out of range");
  const double* row = trial.frames.raw() + t * kFeatureCount;
  return std::hypot(row[kBallX] - row[kHandBaseX], row[kBallY] - row[kHandBaseY]);
}

}  // namespace earlycast
