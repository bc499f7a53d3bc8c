#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

using namespace debye::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("debye_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_args(std::vector<std::string> args) {
  args.insert(args.begin(), "debye-cli");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  return run(int(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

fs::path write_config(const fs::path& dir, const std::string& text) {
  fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

std::vector<std::vector<double>> read_csv(const fs::path& p) {
  std::ifstream f(p);
  std::string line;
  std::getline(f, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("fixed float formatting") {
  CHECK(fmt(1.0) == "1.000000000000000e+00");
  CHECK(fmt(-0.25) == "-2.500000000000000e-01");
}

TEST_CASE("multipliers: default table, asymptote and determinism") {
  auto d = scratch("mult");
  REQUIRE(run_args({"multipliers", "--out", (d / "a").string()}) == kPass);
  auto rows = read_csv(d / "a" / "multipliers.csv");
  CHECK(rows.size() == 600);
  // |m_n(1, l)| approaches |1/2 - i/(2l+1)|
  double prev = 1e300;
  for (const auto& r : rows) {
    if (r[0] != 1.0 || int(r[1]) % 50 != 0) continue;
    double l = r[1];
    double gap = std::abs(r[4] - std::hypot(0.5, 1.0 / (2 * l + 1)));
    CHECK(gap < prev);
    prev = gap;
  }
  CHECK(prev < 2e-3);
  REQUIRE(run_args({"multipliers", "--out", (d / "b").string()}) == kPass);
  CHECK(slurp(d / "a" / "multipliers.csv") == slurp(d / "b" / "multipliers.csv"));

  json m = load(d / "a" / "manifest.json");
  CHECK(m["command"] == "multipliers");
  CHECK(m["config_hash"] == config_hash(m["config"]));
  CHECK(m["outputs"][0] == "multipliers.csv");
  CHECK(m["exit_code"] == 0);
  CHECK(m["timings"].contains("total_s"));
}

TEST_CASE("multipliers: empty degree range and k range flags") {
  auto d = scratch("mult_empty");
  REQUIRE(run_args({"multipliers", "--lmin", "5", "--lmax", "4", "--out", d.string()}) == kPass);
  CHECK(read_csv(d / "multipliers.csv").empty());
  REQUIRE(run_args({"multipliers", "--kmin", "1", "--kmax", "2", "--nk", "3", "--lmax", "2", "--out", d.string()}) ==
          kPass);
  auto rows = read_csv(d / "multipliers.csv");
  REQUIRE(rows.size() == 6);
  CHECK(rows[2][0] == 1.5);
}

TEST_CASE("config validation") {
  auto d = scratch("config");
  auto bad = [&](const std::string& text) {
    return run_args({"sphere-scatter", "--config", write_config(d, text).string(), "--out", d.string()});
  };
  CHECK(bad("{\"k\": 1.0, \"lmax\": \"x\"}") == kConfig);
  CHECK(bad("{\"k\": 1.0, \"colour\": 3}") == kConfig);
  CHECK(bad("{\"k\": 1.0,\n \"lmax\": 30,\n}") == kConfig);
  CHECK(bad("[1, 2]") == kConfig);
  CHECK(bad("{\"k\": -1.0}") == kConfig);
  CHECK(bad("{\"incident\": {\"type\": \"laser\"}}") == kConfig);
  CHECK(bad("{\"incident\": {\"type\": \"dipole\", \"position\": [1, 2]}}") == kConfig);
  CHECK(run_args({"pec", "--surface", "torus", "--R", "0.3", "--out", d.string()}) == kConfig);
  CHECK(run_args({"pec", "--surface", "cube", "--out", d.string()}) == kConfig);
  CHECK(run_args({"kneumann", "--surface", "sphere", "--out", d.string()}) == kConfig);
  CHECK(run_args({"roots", "--res", "10", "--out", d.string()}) == kConfig);
  CHECK(run_args({"no-such-command"}) == kConfig);
  CHECK(run_args({"pec", "--res", "abc"}) == kConfig);
}

TEST_CASE("config diagnostics name the line and field") {
  const std::string text = "{\n  \"k\": 1.0,\n  \"lmax\": \"thirty\"\n}\n";
  try {
    merge_config("sphere-scatter", parse_config_text(text, "c.json"), json::object(), text);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    CHECK(std::string(e.what()).find("lmax") != std::string::npos);
  }
  try {
    parse_config_text("{\n\"k\": 1,\n\"lmax\" 3}", "c.json");
    FAIL("expected a syntax error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  // flags override the file
  json c = merge_config("pec", json{{"k", 2.0}, {"res", 10}}, json{{"k", 3.0}});
  CHECK(c["k"] == 3.0);
  CHECK(c["res"] == 10);
  CHECK(merge_config("pec", json::object(), json{{"surface", "torus"}})["incident"]["type"] == "dipole");
}

TEST_CASE("sphere-scatter: spectral PEC at k = 1.7") {
  auto d = scratch("sphere");
  REQUIRE(run_args({"sphere-scatter", "--out", d.string()}) == kPass);
  json r = load(d / "report.json");
  CHECK(r["pass"] == true);
  CHECK(r["residuals"]["pec_tan"].get<double>() < 1e-10);
  CHECK(r["residuals"]["pec_norm"].get<double>() < 1e-10);
  CHECK(read_csv(d / "fields.csv").size() == 64);
  CHECK(read_csv(d / "debye_coefficients.csv").size() == 30 * 32);
}

TEST_CASE("pec: Nystrom sphere, zero incident, residual and conditioning exits") {
  auto d = scratch("pec");
  REQUIRE(run_args({"pec", "--res", "12", "--out", d.string()}) == kPass);
  json r = load(d / "report.json");
  CHECK(r["residuals"]["pec_tan"].get<double>() < 1e-4);
  CHECK(r["resolution"] == 12);
  CHECK(r["surface"] == "sphere");
  CHECK(r.contains("condition_estimate"));

  auto cfg = write_config(d, "{\"incident\": {\"type\": \"zero\"}, \"res\": 10}");
  REQUIRE(run_args({"pec", "--config", cfg.string(), "--out", d.string()}) == kPass);
  r = load(d / "report.json");
  CHECK(r["source_norms"]["r"] == 0.0);
  CHECK(r["source_norms"]["q"] == 0.0);

  CHECK(run_args({"pec", "--res", "10", "--tolerance", "1e-30", "--out", d.string()}) == kResidual);
  CHECK(load(d / "report.json")["pass"] == false);
  cfg = write_config(d, "{\"res\": 10, \"max_condition\": 1.0}");
  CHECK(run_args({"pec", "--config", cfg.string(), "--out", d.string()}) == kConditioning);
  CHECK(load(d / "manifest.json")["exit_code"] == kConditioning);
}

TEST_CASE("kneumann on a coarse torus") {
  auto d = scratch("kn");
  REQUIRE(run_args({"kneumann", "--res", "16", "--out", d.string()}) == kPass);
  json r = load(d / "report.json");
  CHECK(r["count"] == 2);
  CHECK(r["max_normal_residual"].get<double>() < 1e-5);
  REQUIRE(run_args({"kneumann", "--res", "16", "--k", "1e-8", "--out", d.string()}) == kPass);
  r = load(d / "report.json");
  CHECK(r["decoupling"]["e_only_ratio"].get<double>() < 1e-4);
}

TEST_CASE("roots: empty region gives an empty table") {
  auto d = scratch("roots");
  auto cfg = write_config(d, R"({"l_values": [3], "region": {"re_min": 0.05, "re_max": 1.0, "im_min": -0.5, "im_max": -1e-6}})");
  REQUIRE(run_args({"roots", "--config", cfg.string(), "--out", d.string()}) == kPass);
  CHECK(read_csv(d / "roots.csv").empty());
  REQUIRE(run_args({"roots", "--l", "1", "--count", "3", "--out", d.string()}) == kPass);
  auto rows = read_csv(d / "roots.csv");
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) CHECK(row[3] < 0.0);
}

TEST_CASE("jump-test, lowfreq and nystrom-validate pass at small sizes") {
  auto d = scratch("misc");
  CHECK(run_args({"jump-test", "--surface", "sphere", "--res", "16", "--out", d.string()}) == kPass);
  CHECK(run_args({"lowfreq", "--res", "12", "--out", d.string()}) == kPass);
  CHECK(run_args({"lowfreq", "--k", "0.1", "--out", d.string()}) == kConfig);
  CHECK(run_args({"nystrom-validate", "--res", "24", "--out", d.string()}) == kPass);
  CHECK(read_csv(d / "nystrom.csv").size() == 20);
}

TEST_CASE("thread cap is reported") {
  auto d = scratch("threads");
  setenv("DEBYE_BIE_THREADS", "1", 1);
  REQUIRE(run_args({"multipliers", "--lmax", "1", "--out", d.string()}) == kPass);
  CHECK(load(d / "manifest.json")["threads"] == 1);
  unsetenv("DEBYE_BIE_THREADS");
}
