#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "earlycast/data.hpp"
#include "earlycast/error.hpp"
#include "json.hpp"

namespace earlycast {

namespace {

constexpr std::size_t kMetaColumns = 5;
constexpr std::size_t kCsvColumns = kMetaColumns + kFeatureCount;

std::string csv_header() {
  std::string h = "trial_id,frame,label,hand_side,contact_frame";
  for (std::size_t c = 0; c < kFeatureCount; ++c) h += "," + feature_name(c);
  return h;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void bad_line(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw DataError(path.string() + ":" + std::to_string(line) + ": " + what);
}

template <typename T>
T parse_number(std::string_view field, const std::filesystem::path& path, std::size_t line, const std::string& column) {
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    bad_line(path, line, "cannot parse " + column + " value '" + std::string(field) + "'");
  }
  return value;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void write_trials(const std::filesystem::path& path, std::span<const RawTrial> trials) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw DataError("cannot write " + path.string());
  std::fprintf(f, "%s\n", csv_header().c_str());
  for (const auto& t : trials) {
    for (std::size_t i = 0; i < t.length(); ++i) {
      std::fprintf(f, "%llu,%zu,%d,%s,%zu", static_cast<unsigned long long>(t.trial_id), i, t.label,
                   std::string(hand_side_name(t.hand_side)).c_str(), t.contact_frame);
      for (std::size_t c = 0; c < kFeatureCount; ++c) std::fprintf(f, ",%.9g", t.frames.at(i, c));
      std::fputc('\n', f);
    }
  }
  if (std::fclose(f) != 0) throw DataError("error while writing " + path.string());
}

std::vector<RawTrial> read_trials(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError(path.string() + ": no trials");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != csv_header()) bad_line(path, line_no, "unexpected header");

  std::vector<RawTrial> trials;
  std::vector<double> rows;
  auto finish = [&](std::size_t last_line) {
    if (trials.empty()) return;
    RawTrial& t = trials.back();
    const std::size_t len = rows.size() / kFeatureCount;
    if (len < kSequenceLength) {
      bad_line(path, last_line, "trial " + std::to_string(t.trial_id) + " has " + std::to_string(len) +
                                    " frames, needs at least " + std::to_string(kSequenceLength));
    }
    if (t.contact_frame >= len) {
      bad_line(path, last_line, "trial " + std::to_string(t.trial_id) + " contact frame beyond its last frame");
    }
    t.frames = Tensor(Shape{len, kFeatureCount}, std::move(rows));
    rows.clear();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != kCsvColumns) {
      bad_line(path, line_no, "expected " + std::to_string(kCsvColumns) + " columns, got " + std::to_string(fields.size()));
    }
    const auto id = parse_number<std::uint64_t>(fields[0], path, line_no, "trial_id");
    const auto frame = parse_number<std::size_t>(fields[1], path, line_no, "frame");
    const auto label = parse_number<int>(fields[2], path, line_no, "label");
    if (label != 0 && label != 1) bad_line(path, line_no, "label must be 0 or 1");
    HandSide side;
    if (fields[3] == "left") side = HandSide::kLeft;
    else if (fields[3] == "right") side = HandSide::kRight;
    else bad_line(path, line_no, "hand_side must be left or right");
    const auto contact = parse_number<std::size_t>(fields[4], path, line_no, "contact_frame");

    if (trials.empty() || trials.back().trial_id != id) {
      finish(line_no - 1);
      for (const auto& t : trials) {
        if (t.trial_id == id) bad_line(path, line_no, "trial " + std::to_string(id) + " is not contiguous");
      }
      RawTrial t;
      t.trial_id = id;
      t.label = label;
      t.hand_side = side;
      t.contact_frame = contact;
      t.drop_kind = label == 1 ? DropKind::kCatch : DropKind::kUnknown;
      trials.push_back(std::move(t));
      if (frame != 0) bad_line(path, line_no, "trial " + std::to_string(id) + " must start at frame 0");
    } else {
      const RawTrial& t = trials.back();
      if (frame != rows.size() / kFeatureCount) bad_line(path, line_no, "frames out of order");
      if (t.label != label || t.hand_side != side || t.contact_frame != contact) {
        bad_line(path, line_no, "trial metadata changes within trial " + std::to_string(id));
      }
    }
    for (std::size_t c = 0; c < kFeatureCount; ++c) {
      const auto v = parse_number<double>(fields[kMetaColumns + c], path, line_no, feature_name(c));
      if (!std::isfinite(v)) bad_line(path, line_no, "non-finite " + feature_name(c));
      rows.push_back(v);
    }
  }
  finish(line_no);
  if (trials.empty()) throw DataError(path.string() + ": no trials");
  return trials;
}

void write_dataset(const std::filesystem::path& dir, std::span<const RawTrial> trials, const SynthConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  write_trials(dir / "trials.csv", trials);
  nlohmann::ordered_json manifest;
  manifest["format"] = "earlycast-dataset";
  manifest["version"] = 1;
  manifest["trials_file"] = "trials.csv";
  manifest["seed"] = config.seed;
  manifest["config_hash"] = hex64(config.hash());
  manifest["trial_count"] = trials.size();
  std::istringstream canon(config.canonical());
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (std::string kv; std::getline(canon, kv);) {
    const auto eq = kv.find('=');
    cfg[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  manifest["config"] = cfg;
  auto& kinds = manifest["drop_kinds"] = nlohmann::ordered_json::array();
  for (const auto& t : trials) kinds.push_back(std::string(drop_kind_name(t.drop_kind)));
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

std::vector<RawTrial> read_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw DataError("cannot read " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "earlycast-dataset") throw DataError(manifest_path.string() + ": not a dataset manifest");
  auto trials = read_trials(dir / manifest.value("trials_file", "trials.csv"));
  const auto& kinds = manifest.at("drop_kinds");
  if (kinds.size() != trials.size()) {
    throw DataError(manifest_path.string() + ": lists " + std::to_string(kinds.size()) + " drop kinds for " +
                    std::to_string(trials.size()) + " trials");
  }
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto kind = parse_drop_kind(kinds[i].get<std::string>());
    if (!kind || (*kind == DropKind::kCatch) != (trials[i].label == 1)) {
      throw DataError(manifest_path.string() + ": drop kind of trial " + std::to_string(trials[i].trial_id) +
                      " disagrees with its label");
    }
    trials[i].drop_kind = *kind;
  }
  return trials;
}

}  // namespace earlycast
