#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "doctest.h"
#include "earlycast/bundle.hpp"
#include "earlycast/error.hpp"
#include "earlycast/experiment.hpp"

using namespace earlycast;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "earlycast_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

ExperimentConfig tiny(const fs::path& out, std::vector<std::string> models, std::size_t reps = 1) {
  ExperimentConfig c = ExperimentConfig::for_preset(Preset::kDesk);
  c.out = out;
  c.synth.trial_count = 50;
  c.repetitions = reps;
  c.models = std::move(models);
  for (const char* m : {"MTO", "MTM", "HYB", "PREDICTOR", "TCN10", "TCN30", "TCN60"}) c.epochs[m] = 5;
  return c;
}

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + EARLYCAST_CLI + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("presets and seeds") {
  const ExperimentConfig full = ExperimentConfig::for_preset(Preset::kFull);
  CHECK(full.repetitions == 10);
  CHECK(full.synth.trial_count == 1975);
  CHECK(full.lstm_config(LstmVariant::kMto).epochs == 250);
  CHECK(full.lstm_config(LstmVariant::kPredictor).epochs == 200);
  CHECK(full.tcn_config("TCN30").epochs == 500);
  CHECK(full.models.size() == 7);
  const ExperimentConfig desk = ExperimentConfig::for_preset(Preset::kDesk);
  CHECK(desk.repetitions == 3);
  CHECK(desk.synth.trial_count == 400);
  CHECK(desk.lstm_config(LstmVariant::kMtm).epochs == 50);
  CHECK(desk.tcn_config("TCN60").epochs == 100);
  CHECK(parse_preset("desk") == Preset::kDesk);
  CHECK_FALSE(parse_preset("huge").has_value());

  CHECK(full.repetition_seed(0) != full.repetition_seed(1));
  CHECK(ExperimentConfig::model_seed(5, "MTM") != ExperimentConfig::model_seed(5, "MTO"));
  ExperimentConfig other = full;
  other.seed = 2;
  CHECK(other.repetition_seed(0) != full.repetition_seed(0));
  CHECK(other.canonical() != full.canonical());

  ExperimentConfig bad = full;
  bad.models = {"MTM", "GRU"};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.models = {};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = full;
  bad.repetitions = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = full;
  bad.epochs["LSTM"] = 3;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("generate is deterministic and sized by the config") {
  const fs::path a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
  ExperimentConfig c = tiny(a, {"MTM"});
  c.synth.trial_count = 10;
  CHECK(cmd_generate(c) == 10);
  c.out = b;
  cmd_generate(c);
  CHECK(slurp(a / "dataset" / "trials.csv") == slurp(b / "dataset" / "trials.csv"));
  CHECK(slurp(a / "dataset" / "manifest.json") == slurp(b / "dataset" / "manifest.json"));
  const auto trials = load_trials(c);
  CHECK(trials.size() == 10);
  CHECK(std::count_if(trials.begin(), trials.end(), [](const RawTrial& t) { return t.label == 1; }) == 5);

  c.synth.trial_count = 1975;
  c.out = fresh_dir("gen_full");
  CHECK(cmd_generate(c) == 1975);
}

TEST_CASE("train, evaluate and report a small roster") {
  const fs::path out = fresh_dir("pipeline");
  ExperimentConfig c = tiny(out, {"MTM", "PSC", "TCN10"}, 2);
  c.emit_traces = true;
  cmd_generate(c);
  const auto records = cmd_train(c);
  REQUIRE(records.size() == 2);
  for (const auto& r : records) {
    CHECK_FALSE(r.any_failed());
    CHECK(r.n_train == 30);
    CHECK(r.n_test == 10);
    REQUIRE(r.find("PSC"));
    CHECK(r.find("PSC")->bundles.size() == 2);
    CHECK(r.find("MTM")->bundles.size() == 1);
  }
  CHECK(records[0].test_hash != records[1].test_hash);
  const auto psc_cls = load_bundle(out / "rep0" / "models" / "PSC.classifier.bin");
  const auto mtm = load_bundle(out / "rep0" / "models" / "MTM.bin");
  CHECK(psc_cls.variant() == "MTM");
  CHECK(slurp(out / "rep0" / "models" / "PSC.classifier.bin") == slurp(out / "rep0" / "models" / "MTM.bin"));
  CHECK(load_bundle(out / "rep0" / "models" / "PREDICTOR.bin").variant() == "PREDICTOR");
  CHECK(line_count(out / "rep0" / "models" / "MTM.loss.csv") == 6);

  const auto reports = cmd_evaluate(c);
  REQUIRE(reports.size() == 2);
  const std::string first = slurp(out / "rep1" / "report.json");
  cmd_evaluate(c);
  CHECK(slurp(out / "rep1" / "report.json") == first);
  for (const char* m : {"MTM", "PSC", "TCN10"}) {
    CHECK(line_count(out / "rep0" / "traces" / (std::string(m) + ".csv")) == 1 + 10 * 60);
  }
  const std::string psc_trace = slurp(out / "rep0" / "traces" / "PSC.csv");
  CHECK(psc_trace.find(",9,") != std::string::npos);

  // The PSC trace at full history is the MTM output at full history.
  const auto* p = reports[0].find("PSC");
  const auto* m = reports[0].find("MTM");
  REQUIRE((p && m && p->ok && m->ok));
  CHECK(p->metrics.acc50.correct.back() == m->metrics.acc50.correct.back());
  CHECK(p->metrics.acc75.decisive.back() == m->metrics.acc75.decisive.back());

  const ExperimentReport r = cmd_report(c);
  CHECK(r.repetitions.size() == 2);
  REQUIRE(r.find("PSC"));
  CHECK(r.find("PSC")->repetitions == 2);
  CHECK(r.find("PSC")->mttcd_per_repetition.size() == 2);
  const std::string summary = slurp(out / "summary.txt");
  CHECK(summary == render_summary(read_experiment_json(out / "report.json")));
  CHECK(summary.find("N = 10 test trials") != std::string::npos);
  CHECK(line_count(out / "accuracy_curves.csv") == 1 + 3 * 2 * 60);
  CHECK(line_count(out / "decisions.csv") == 4);

  // Training again from the same seed reproduces the bundles.
  const std::string bundle = slurp(out / "rep1" / "models" / "TCN10.bin");
  cmd_train(c);
  CHECK(slurp(out / "rep1" / "models" / "TCN10.bin") == bundle);

  // A changed dataset no longer matches the recorded split.
  ExperimentConfig changed = c;
  changed.seed = 99;
  cmd_generate(changed);
  CHECK_THROWS_AS(cmd_evaluate(c), DataError);
}

TEST_CASE("one failing model leaves the others intact") {
  const fs::path out = fresh_dir("isolation");
  ExperimentConfig c = tiny(out, {"MTO", "MTM"});
  cmd_generate(c);
  // A directory where the MTO bundle should go makes only MTO fail.
  fs::create_directories(out / "rep0" / "models" / "MTO.bin");
  const auto records = cmd_train(c);
  const auto& rec = records.front();
  REQUIRE(rec.find("MTO"));
  CHECK_FALSE(rec.find("MTO")->ok);
  CHECK_FALSE(rec.find("MTO")->error.empty());
  CHECK(rec.find("MTO")->bundles.empty());
  CHECK(rec.find("MTM")->ok);
  CHECK(rec.any_failed());
  const auto reports = cmd_evaluate(c);
  CHECK_FALSE(reports[0].find("MTO")->ok);
  CHECK(reports[0].find("MTM")->ok);
  const ExperimentReport r = cmd_report(c);
  CHECK(r.find("MTO")->repetitions == 0);
  CHECK(r.find("MTO")->failures == 1);
  const std::string summary = render_summary(r);
  CHECK(summary.find("MTO in repetition 0") != std::string::npos);
  CHECK(summary.find("\xe2\x80\x94") != std::string::npos);
}

TEST_CASE("summary rendering") {
  ExperimentReport r;
  r.seed = 7;
  r.preset = "desk";
  r.roster = {"MTM", "TCN60"};
  MeanModelReport a;
  a.model = "MTM";
  a.repetitions = 2;
  a.n_per_repetition = 395;
  a.acc50_mean = {0.5, 0.9};
  a.acc75_mean = {0.1, 0.8};
  a.n_decisions = 600;
  a.n_correct = 500;
  a.mttd_steps = 27.77;
  a.mttcd_steps = 45.0;
  a.mttcd_per_repetition = {44.0, 46.0};
  MeanModelReport b;
  b.model = "TCN60";
  b.repetitions = 2;
  b.n_per_repetition = 395;
  b.acc50_mean = {0.5, 0.6};
  b.acc75_mean = {0.0, 0.0};
  b.mttcd_per_repetition = {std::nullopt, std::nullopt};
  r.means = {a, b};
  r.repetitions.resize(2);
  const std::string s = render_summary(r);
  CHECK(s.find("N = 395 test trials") != std::string::npos);
  CHECK(s.find("277.7 (-122.3)") != std::string::npos);
  CHECK(s.find("450.0 (+50.0)") != std::string::npos);
  CHECK(s.find("300.0") != std::string::npos);
  const auto tcn = s.find("TCN60");
  REQUIRE(tcn != std::string::npos);
  CHECK(s.find("\xe2\x80\x94", tcn) < s.find('\n', tcn));
  CHECK(render_summary(r) == s);
}

TEST_CASE("command line exit codes and configuration") {
  const fs::path out = fresh_dir("cli");
  const std::string base = "--out " + out.string() + " -q ";
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli(base) == 1);
  CHECK(run_cli(base + "--preset huge generate") == 1);
  CHECK(run_cli(base + "--models MTM,GRU generate") == 1);
  CHECK(run_cli(base + "--epochs MTM=zero generate") == 1);
  CHECK(run_cli(base + "evaluate") == 2);
  CHECK(run_cli(base + "--trials 12 generate") == 0);
  CHECK(load_trials(tiny(out, {"MTM"})).size() == 12);

  const fs::path env_out = fresh_dir("cli_env");
  CHECK(run_cli("-q --trials 8 generate", "EARLYCAST_OUT=" + env_out.string()) == 0);
  CHECK(fs::exists(env_out / "dataset" / "trials.csv"));

  const fs::path ini = out / "exp.ini";
  {
    std::ofstream f(ini);
    f << "schema = 1\n[experiment]\nrepetitions = 1\nmodels = MTM\n[data]\ntrials = 20\n[epochs]\nMTM = 2\n";
  }
  CHECK(run_cli(base + "--config " + ini.string() + " generate") == 0);
  CHECK(load_trials(tiny(out, {"MTM"})).size() == 20);
  CHECK(run_cli(base + "--config " + ini.string() + " --trials 30 generate") == 0);
  CHECK(load_trials(tiny(out, {"MTM"})).size() == 30);
  {
    std::ofstream f(out / "bad.ini");
    f << "schema = 1\n[experiment]\nrepeats = 2\n";
  }
  CHECK(run_cli(base + "--config " + (out / "bad.ini").string() + " generate") == 1);
  {
    std::ofstream f(out / "noschema.ini");
    f << "[data]\ntrials = 5\n";
  }
  CHECK(run_cli(base + "--config " + (out / "noschema.ini").string() + " generate") == 1);

  CHECK(run_cli(base + "--config " + ini.string() + " all") == 0);
  CHECK(fs::exists(out / "summary.txt"));
  fs::remove_all(out / "rep0");
  fs::create_directories(out / "rep0" / "models" / "MTM.bin");
  CHECK(run_cli(base + "--config " + ini.string() + " train") == 3);
}
