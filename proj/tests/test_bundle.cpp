#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "doctest.h"
#include "earlycast/bundle.hpp"
#include "earlycast/error.hpp"

using namespace earlycast;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "earlycast_test_bundle";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

void check_same(const std::vector<const Tensor*>& a, const std::vector<const Tensor*>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->shape() == b[i]->shape());
    CHECK(*a[i] == *b[i]);
  }
}

}  // namespace

TEST_CASE("every LSTM variant survives a round trip bitwise") {
  Rng rng(1);
  for (auto v : {LstmVariant::kMto, LstmVariant::kMtm, LstmVariant::kHyb, LstmVariant::kPredictor}) {
    LstmModelConfig cfg = LstmModelConfig::for_variant(v);
    cfg.forget_bias = 1.0;
    cfg.adam.eta = 0.0123456789;
    LstmModel m = build_model(cfg, rng);
    m.info.seed = 77;
    m.info.epochs_run = 5;
    m.info.final_train_loss = 0.1 + 1e-17;
    const fs::path p = scratch(std::string(variant_name(v)) + ".bin");
    save_bundle(p, m);
    const LoadedBundle b = load_bundle(p);
    REQUIRE(b.lstm.has_value());
    CHECK_FALSE(b.tcn.has_value());
    CHECK(b.variant() == variant_name(v));
    CHECK(b.lstm->config.variant == v);
    CHECK(b.lstm->config.adam.eta == cfg.adam.eta);
    CHECK(b.lstm->config.output_dropout == cfg.output_dropout);
    CHECK(b.lstm->config.forget_bias == 1.0);
    CHECK(b.lstm->info.seed == 77);
    CHECK(b.lstm->info.final_train_loss == m.info.final_train_loss);
    CHECK(std::isnan(b.lstm->info.final_validation_loss));
    CHECK(b.lstm->parameter_count() == m.parameter_count());
    check_same(static_cast<const LstmModel&>(m).parameters(), static_cast<const LstmModel&>(*b.lstm).parameters());
    save_bundle(scratch("again.bin"), *b.lstm);
    CHECK(slurp(scratch("again.bin")) == slurp(p));
  }
}

TEST_CASE("every TCN preset survives a round trip bitwise") {
  Rng rng(2);
  for (const auto& cfg : {TcnConfig::tcn10(), TcnConfig::tcn30(), TcnConfig::tcn60()}) {
    const TcnModel m = build_tcn(cfg, rng);
    const fs::path p = scratch(cfg.name + ".bin");
    save_bundle(p, m);
    const LoadedBundle b = load_bundle(p);
    REQUIRE(b.tcn.has_value());
    CHECK(b.variant() == cfg.name);
    CHECK(b.tcn->config.dilations == cfg.dilations);
    CHECK(b.tcn->config.dropout == cfg.dropout);
    CHECK(b.tcn->config.batch_size == cfg.batch_size);
    CHECK(b.tcn->blocks.size() == m.blocks.size());
    CHECK(b.tcn->blocks.front().has_downsample() == m.blocks.front().has_downsample());
    check_same(m.parameters(), static_cast<const TcnModel&>(*b.tcn).parameters());
  }
}

TEST_CASE("malformed bundles are rejected") {
  Rng rng(3);
  LstmModelConfig cfg = LstmModelConfig::for_variant(LstmVariant::kMtm);
  cfg.hidden = 4;
  const fs::path good = scratch("good.bin");
  save_bundle(good, build_model(cfg, rng));
  const std::string bytes = slurp(good);

  CHECK_THROWS_AS(load_bundle(scratch("missing.bin")), DataError);

  std::string bad = bytes;
  bad[0] = 'X';
  spit(scratch("magic.bin"), bad);
  CHECK_THROWS_AS(load_bundle(scratch("magic.bin")), DataError);

  spit(scratch("short.bin"), bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(load_bundle(scratch("short.bin")), DataError);

  spit(scratch("long.bin"), bytes + "x");
  CHECK_THROWS_AS(load_bundle(scratch("long.bin")), DataError);

  bad = bytes;
  const auto at = bad.find("hidden=4");
  REQUIRE(at != std::string::npos);
  bad[at + 7] = '5';
  spit(scratch("shape.bin"), bad);
  try {
    load_bundle(scratch("shape.bin"));
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("shape") != std::string::npos);
  }

  bad = bytes;
  const auto v = bad.find("variant=MTM");
  REQUIRE(v != std::string::npos);
  bad.replace(v + 8, 3, "XYZ");
  spit(scratch("variant.bin"), bad);
  CHECK_THROWS_WITH_AS(load_bundle(scratch("variant.bin")), doctest::Contains("unknown LSTM variant"), DataError);
  CHECK_FALSE(fs::exists(scratch("good.bin.tmp")));
}
