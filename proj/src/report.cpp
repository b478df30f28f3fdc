#include "earlycast/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "earlycast/error.hpp"
#include "json.hpp"

namespace earlycast {

using nlohmann::json;

namespace {

constexpr int kSchema = 1;
constexpr const char* kAbsent = "\xe2\x80\x94";

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> get_opt(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::optional<double> ms(const std::optional<double>& steps) { return steps_to_ms(steps); }

std::optional<double> delta(const std::optional<double>& steps) {
  if (!steps) return std::nullopt;
  return *steps * kFrameMs - kContactMs;
}

json curve_json(const AccuracyCurve& c) {
  return {{"n", c.n}, {"accuracy", c.accuracy}, {"correct", c.correct}, {"decisive", c.decisive}};
}

AccuracyCurve curve_from(const json& j) {
  AccuracyCurve c;
  c.n = j.at("n").get<std::size_t>();
  c.accuracy = j.at("accuracy").get<std::vector<double>>();
  c.correct = j.at("correct").get<std::vector<std::size_t>>();
  c.decisive = j.at("decisive").get<std::vector<std::size_t>>();
  return c;
}

json metrics_json(const MetricsReport& m) {
  const auto& d = m.decisions;
  return {{"n", m.n},
          {"acc50", curve_json(m.acc50)},
          {"acc75", curve_json(m.acc75)},
          {"decisions",
           {{"n_decisions", d.n_decisions},
            {"n_correct", d.n_correct},
            {"ttd_sum_steps", d.ttd_sum},
            {"ttcd_sum_steps", d.ttcd_sum},
            {"mttd_steps", opt(d.mttd_steps)},
            {"mttcd_steps", opt(d.mttcd_steps)},
            {"mttd_ms", opt(ms(d.mttd_steps))},
            {"mttcd_ms", opt(ms(d.mttcd_steps))},
            {"mttd_delta_ms", opt(delta(d.mttd_steps))},
            {"mttcd_delta_ms", opt(delta(d.mttcd_steps))}}},
          {"before_contact", {{"pool", m.early_pool}, {"decisive", m.early_decisive}, {"correct", m.early_correct}}}};
}

MetricsReport metrics_from(const json& j, const std::string& model) {
  MetricsReport m;
  m.model = model;
  m.n = j.at("n").get<std::size_t>();
  m.acc50 = curve_from(j.at("acc50"));
  m.acc75 = curve_from(j.at("acc75"));
  const json& d = j.at("decisions");
  m.decisions.n_decisions = d.at("n_decisions").get<std::size_t>();
  m.decisions.n_correct = d.at("n_correct").get<std::size_t>();
  m.decisions.ttd_sum = d.at("ttd_sum_steps").get<double>();
  m.decisions.ttcd_sum = d.at("ttcd_sum_steps").get<double>();
  m.decisions.mttd_steps = get_opt(d.at("mttd_steps"));
  m.decisions.mttcd_steps = get_opt(d.at("mttcd_steps"));
  const json& e = j.at("before_contact");
  m.early_pool = e.at("pool").get<std::size_t>();
  m.early_decisive = e.at("decisive").get<std::size_t>();
  m.early_correct = e.at("correct").get<std::size_t>();
  return m;
}

json repetition_json(const RepetitionReport& r) {
  json models = json::array();
  for (const auto& m : r.models) {
    json o = {{"model", m.model}, {"ok", m.ok}, {"error", m.error}};
    o["metrics"] = m.ok ? metrics_json(m.metrics) : json(nullptr);
    models.push_back(std::move(o));
  }
  return {{"repetition", r.index}, {"split_seed", r.split_seed}, {"test_hash", r.test_hash},
          {"n_test", r.n_test},    {"models", std::move(models)}};
}

RepetitionReport repetition_from(const json& j) {
  RepetitionReport r;
  r.index = j.at("repetition").get<std::size_t>();
  r.split_seed = j.at("split_seed").get<std::uint64_t>();
  r.test_hash = j.at("test_hash").get<std::uint64_t>();
  r.n_test = j.at("n_test").get<std::size_t>();
  for (const json& o : j.at("models")) {
    ModelResult m;
    m.model = o.at("model").get<std::string>();
    m.ok = o.at("ok").get<bool>();
    m.error = o.at("error").get<std::string>();
    if (m.ok) m.metrics = metrics_from(o.at("metrics"), m.model);
    r.models.push_back(std::move(m));
  }
  return r;
}

json mean_json(const MeanModelReport& m) {
  json per_ttd = json::array(), per_ttcd = json::array();
  for (const auto& v : m.mttd_per_repetition) per_ttd.push_back(opt(v));
  for (const auto& v : m.mttcd_per_repetition) per_ttcd.push_back(opt(v));
  return {{"model", m.model},
          {"repetitions", m.repetitions},
          {"failures", m.failures},
          {"n_per_repetition", m.n_per_repetition},
          {"acc50_mean", m.acc50_mean},
          {"acc50_std", m.acc50_std},
          {"acc75_mean", m.acc75_mean},
          {"acc75_std", m.acc75_std},
          {"decisive75_mean", m.decisive75_mean},
          {"n_decisions", m.n_decisions},
          {"n_correct", m.n_correct},
          {"mttd_steps", opt(m.mttd_steps)},
          {"mttcd_steps", opt(m.mttcd_steps)},
          {"mttd_ms", opt(ms(m.mttd_steps))},
          {"mttcd_ms", opt(ms(m.mttcd_steps))},
          {"mttd_delta_ms", opt(delta(m.mttd_steps))},
          {"mttcd_delta_ms", opt(delta(m.mttcd_steps))},
          {"mttd_steps_per_repetition", per_ttd},
          {"mttcd_steps_per_repetition", per_ttcd},
          {"before_contact", {{"pool", m.early_pool}, {"decisive", m.early_decisive}, {"correct", m.early_correct}}}};
}

MeanModelReport mean_from(const json& j) {
  MeanModelReport m;
  m.model = j.at("model").get<std::string>();
  m.repetitions = j.at("repetitions").get<std::size_t>();
  m.failures = j.at("failures").get<std::size_t>();
  m.n_per_repetition = j.at("n_per_repetition").get<std::size_t>();
  m.acc50_mean = j.at("acc50_mean").get<std::vector<double>>();
  m.acc50_std = j.at("acc50_std").get<std::vector<double>>();
  m.acc75_mean = j.at("acc75_mean").get<std::vector<double>>();
  m.acc75_std = j.at("acc75_std").get<std::vector<double>>();
  m.decisive75_mean = j.at("decisive75_mean").get<std::vector<double>>();
  m.n_decisions = j.at("n_decisions").get<std::size_t>();
  m.n_correct = j.at("n_correct").get<std::size_t>();
  m.mttd_steps = get_opt(j.at("mttd_steps"));
  m.mttcd_steps = get_opt(j.at("mttcd_steps"));
  for (const json& v : j.at("mttd_steps_per_repetition")) m.mttd_per_repetition.push_back(get_opt(v));
  for (const json& v : j.at("mttcd_steps_per_repetition")) m.mttcd_per_repetition.push_back(get_opt(v));
  const json& e = j.at("before_contact");
  m.early_pool = e.at("pool").get<std::size_t>();
  m.early_decisive = e.at("decisive").get<std::size_t>();
  m.early_correct = e.at("correct").get<std::size_t>();
  return m;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out << text;
    if (!out) throw DataError("error while writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move " + tmp + " into place: " + ec.message());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    json j = json::parse(in);
    if (j.value("schema", 0) != kSchema) throw DataError(path.string() + ": unsupported report schema");
    return j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

template <typename F>
auto guarded(const std::filesystem::path& path, F f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string num(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}


std::string ms_cell(const std::optional<double>& steps) {
  if (!steps) return kAbsent;
  return num("%.1f", *steps * kFrameMs) + " (" + num("%+.1f", *steps * kFrameMs - kContactMs) + ")";
}

// Pads to `width` display columns; the absent marker is one column wide
// but three bytes long.
std::string pad(const std::string& s, std::size_t width, bool right = true) {
  std::size_t cols = 0;
  for (unsigned char c : s) cols += (c & 0xC0) != 0x80;
  if (cols >= width) return s;
  const std::string fill(width - cols, ' ');
  return right ? fill + s : s + fill;
}

}  // namespace

const ModelResult* RepetitionReport::find(const std::string& model) const {
  for (const auto& m : models)
    if (m.model == model) return &m;
  return nullptr;
}

const MeanModelReport* ExperimentReport::find(const std::string& model) const {
  for (const auto& m : means)
    if (m.model == model) return &m;
  return nullptr;
}

std::vector<MeanModelReport> mean_reports(const std::vector<RepetitionReport>& reps,
                                          const std::vector<std::string>& roster) {
  std::vector<MeanModelReport> out;
  for (const auto& name : roster) {
    MeanModelReport m;
    m.model = name;
    std::vector<const MetricsReport*> ok;
    for (const auto& rep : reps) {
      const ModelResult* r = rep.find(name);
      if (r && r->ok) {
        ok.push_back(&r->metrics);
        m.mttd_per_repetition.push_back(r->metrics.decisions.mttd_steps);
        m.mttcd_per_repetition.push_back(r->metrics.decisions.mttcd_steps);
      } else {
        ++m.failures;
        m.mttd_per_repetition.push_back(std::nullopt);
        m.mttcd_per_repetition.push_back(std::nullopt);
      }
    }
    m.repetitions = ok.size();
    if (!ok.empty()) {
      m.n_per_repetition = ok.front()->n;
      const std::size_t T = ok.front()->acc50.accuracy.size();
      const double k = static_cast<double>(ok.size());
      auto stats = [&](auto get, std::vector<double>& mean, std::vector<double>* sd) {
        mean.assign(T, 0.0);
        for (const MetricsReport* r : ok)
          for (std::size_t t = 0; t < T; ++t) mean[t] += get(*r, t);
        for (double& v : mean) v /= k;
        if (!sd) return;
        sd->assign(T, 0.0);
        for (const MetricsReport* r : ok)
          for (std::size_t t = 0; t < T; ++t) (*sd)[t] += std::pow(get(*r, t) - mean[t], 2);
        for (double& v : *sd) v = std::sqrt(v / k);
      };
      for (const MetricsReport* r : ok) {
        if (r->acc50.accuracy.size() != T) throw ShapeError(name + ": repetitions disagree on the sequence length");
      }
      stats([](const MetricsReport& r, std::size_t t) { return r.acc50.accuracy[t]; }, m.acc50_mean, &m.acc50_std);
      stats([](const MetricsReport& r, std::size_t t) { return r.acc75.accuracy[t]; }, m.acc75_mean, &m.acc75_std);
      stats([](const MetricsReport& r, std::size_t t) { return static_cast<double>(r.acc75.decisive[t]); },
            m.decisive75_mean, nullptr);
      double ttd = 0.0, ttcd = 0.0;
      for (const MetricsReport* r : ok) {
        m.n_decisions += r->decisions.n_decisions;
        m.n_correct += r->decisions.n_correct;
        ttd += r->decisions.ttd_sum;
        ttcd += r->decisions.ttcd_sum;
        m.early_pool += r->early_pool;
        m.early_decisive += r->early_decisive;
        m.early_correct += r->early_correct;
      }
      if (m.n_decisions) m.mttd_steps = ttd / static_cast<double>(m.n_decisions);
      if (m.n_correct) m.mttcd_steps = ttcd / static_cast<double>(m.n_correct);
    }
    out.push_back(std::move(m));
  }
  return out;
}

void write_repetition_json(const std::filesystem::path& path, const RepetitionReport& rep) {
  json j = repetition_json(rep);
  j["schema"] = kSchema;
  write_text(path, j.dump(2) + "\n");
}

RepetitionReport read_repetition_json(const std::filesystem::path& path) {
  const json j = read_json(path);
  return guarded(path, [&] { return repetition_from(j); });
}

void write_experiment_json(const std::filesystem::path& path, const ExperimentReport& report) {
  json reps = json::array(), means = json::array();
  for (const auto& r : report.repetitions) reps.push_back(repetition_json(r));
  for (const auto& m : report.means) means.push_back(mean_json(m));
  const json j = {{"schema", kSchema},      {"seed", report.seed},         {"preset", report.preset},
                  {"roster", report.roster}, {"repetitions", std::move(reps)}, {"means", std::move(means)}};
  write_text(path, j.dump(2) + "\n");
}

ExperimentReport read_experiment_json(const std::filesystem::path& path) {
  const json j = read_json(path);
  return guarded(path, [&] {
    ExperimentReport r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.preset = j.at("preset").get<std::string>();
    r.roster = j.at("roster").get<std::vector<std::string>>();
    for (const json& rep : j.at("repetitions")) r.repetitions.push_back(repetition_from(rep));
    for (const json& m : j.at("means")) r.means.push_back(mean_from(m));
    return r;
  });
}

void write_accuracy_csv(const std::filesystem::path& path, const RepetitionReport& rep) {
  std::string s = "model,threshold,history_step,accuracy,decisive_count\n";
  for (const auto& m : rep.models) {
    if (!m.ok) continue;
    for (const auto& [label, c] : {std::pair{"0.50", &m.metrics.acc50}, std::pair{"0.75", &m.metrics.acc75}}) {
      for (std::size_t t = 0; t < c->accuracy.size(); ++t) {
        s += m.model + "," + label + "," + std::to_string(t + 1) + "," + num("%.17g", c->accuracy[t]) + "," +
             std::to_string(c->decisive[t]) + "\n";
      }
    }
  }
  write_text(path, s);
}

void write_accuracy_csv(const std::filesystem::path& path, const std::vector<MeanModelReport>& means) {
  std::string s = "model,threshold,history_step,accuracy,decisive_count\n";
  for (const auto& m : means) {
    for (std::size_t t = 0; t < m.acc50_mean.size(); ++t) {
      s += m.model + ",0.50," + std::to_string(t + 1) + "," + num("%.17g", m.acc50_mean[t]) + "," +
           num("%.17g", static_cast<double>(m.n_per_repetition)) + "\n";
    }
    for (std::size_t t = 0; t < m.acc75_mean.size(); ++t) {
      s += m.model + ",0.75," + std::to_string(t + 1) + "," + num("%.17g", m.acc75_mean[t]) + "," +
           num("%.17g", m.decisive75_mean[t]) + "\n";
    }
  }
  write_text(path, s);
}

namespace {

std::string csv_opt(const std::optional<double>& v) { return v ? num("%.17g", *v) : ""; }

std::string decisions_row(const std::string& model, std::size_t n_dec, const std::optional<double>& ttd,
                          std::size_t n_cor, const std::optional<double>& ttcd) {
  return model + "," + std::to_string(n_dec) + "," + csv_opt(ms(ttd)) + "," + csv_opt(delta(ttd)) + "," +
         std::to_string(n_cor) + "," + csv_opt(ms(ttcd)) + "," + csv_opt(delta(ttcd)) + "\n";
}

constexpr const char* kDecisionsHeader = "model,n_decisions,mttd_ms,mttd_delta_ms,n_correct,mttcd_ms,mttcd_delta_ms\n";

}  // namespace

void write_decisions_csv(const std::filesystem::path& path, const RepetitionReport& rep) {
  std::string s = kDecisionsHeader;
  for (const auto& m : rep.models) {
    if (!m.ok) continue;
    const auto& d = m.metrics.decisions;
    s += decisions_row(m.model, d.n_decisions, d.mttd_steps, d.n_correct, d.mttcd_steps);
  }
  write_text(path, s);
}

void write_decisions_csv(const std::filesystem::path& path, const std::vector<MeanModelReport>& means) {
  std::string s = kDecisionsHeader;
  for (const auto& m : means) s += decisions_row(m.model, m.n_decisions, m.mttd_steps, m.n_correct, m.mttcd_steps);
  write_text(path, s);
}

std::string render_summary(const ExperimentReport& report) {
  std::string s;
  const std::size_t reps = report.repetitions.size();
  std::size_t n = 0;
  for (const auto& m : report.means) n = std::max(n, m.n_per_repetition);
  s += "earlycast summary\n";
  s += "seed " + std::to_string(report.seed) + ", preset " + report.preset + ", " + std::to_string(reps) +
       " repetitions, N = " + std::to_string(n) + " test trials per repetition\n";
  s += "first ball contact at " + num("%.0f", kContactMs) + " ms; negative distances are decisions before it\n\n";

  s += pad("model", 8, false) + pad("decisions", 11) + pad("MTTD ms", 19) + pad("correct", 10) + pad("MTTcD ms", 19) +
       pad("acc50@T", 9) + pad("acc75@T", 9) + pad("early", 14) + "\n";
  for (const auto& m : report.means) {
    const bool any = m.repetitions > 0;
    const double k = any ? static_cast<double>(m.repetitions) : 1.0;
    s += pad(m.model, 8, false);
    s += pad(any ? num("%.1f", static_cast<double>(m.n_decisions) / k) : kAbsent, 11);
    s += pad(ms_cell(m.mttd_steps), 19);
    s += pad(any ? num("%.1f", static_cast<double>(m.n_correct) / k) : kAbsent, 10);
    s += pad(ms_cell(m.mttcd_steps), 19);
    s += pad(any ? num("%.4f", m.acc50_mean.back()) : kAbsent, 9);
    s += pad(any ? num("%.4f", m.acc75_mean.back()) : kAbsent, 9);
    s += pad(any ? std::to_string(m.early_decisive) + "/" + std::to_string(m.early_pool) : kAbsent, 14);
    s += "\n";
  }
  s += "\ndecisions and correct are means per repetition; MTTD and MTTcD pool every defined decision.\n";
  s += "early: catch and miss trials decided at the 75 % threshold just before first contact, summed.\n";

  s += "\nMTTcD ms per repetition\n" + pad("model", 8, false);
  for (std::size_t r = 0; r < reps; ++r) s += pad("rep" + std::to_string(r), 10);
  s += "\n";
  for (const auto& m : report.means) {
    s += pad(m.model, 8, false);
    for (const auto& v : m.mttcd_per_repetition) s += pad(v ? num("%.1f", *v * kFrameMs) : kAbsent, 10);
    s += "\n";
  }

  std::string failures;
  for (const auto& rep : report.repetitions)
    for (const auto& m : rep.models)
      if (!m.ok) failures += "  " + m.model + " in repetition " + std::to_string(rep.index) + ": " + m.error + "\n";
  if (!failures.empty()) s += "\nfailed\n" + failures;
  return s;
}

}  // namespace earlycast
