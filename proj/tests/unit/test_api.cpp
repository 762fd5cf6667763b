#include "doctest.h"

#include "gmmdnn/gmmdnn.h"
#include "json.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kData = GMMDNN_TEST_DATA_DIR;
const std::string kCli = GMMDNN_TEST_CLI;

struct TempDir {
  fs::path path;
  TempDir() {
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path = fs::temp_directory_path() / ("gmmdnn_api_" + std::to_string(stamp));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& cfg) {
  const fs::path p = dir / name;
  std::ofstream(p) << cfg.dump(2);
  return p;
}

json deep_config(const fs::path& out, const std::string& spec = "gauss1d.json") {
  return json{{"kind", "construct-deep"},
              {"spec", (kData / "specs" / spec).string()},
              {"output", out.string()},
              {"seed", 5},
              {"samples", 5000},
              {"delta", 0.5},
              {"q", 0.1}};
}

int run_cli(const std::string& args, std::string* err = nullptr) {
  TempDir tmp;
  const fs::path e = tmp.path / "stderr.txt";
  const std::string cmd = "'" + kCli + "' " + args + " > /dev/null 2> '" + e.string() + "'";
  const int status = std::system(cmd.c_str());
  if (err) *err = slurp(e);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("C API: spec load, info and evaluation") {
  gmmdnn_spec* spec = nullptr;
  REQUIRE(gmmdnn_spec_load((kData / "specs" / "two_class_2d.json").c_str(), &spec) == GMMDNN_OK);
  gmmdnn_spec_info info{};
  REQUIRE(gmmdnn_spec_info_get(spec, &info) == GMMDNN_OK);
  CHECK(info.dim == 2);
  CHECK(info.classes == 2);
  CHECK(info.components == 4);
  CHECK(info.omega_min <= info.omega_max);

  const double x[2] = {0.3, -0.2};
  double ld = 0.0;
  CHECK(gmmdnn_spec_log_discriminant(spec, 0, x, 2, &ld) == GMMDNN_OK);
  CHECK(std::isfinite(ld));
  CHECK(gmmdnn_spec_log_discriminant(spec, 0, x, 3, &ld) == GMMDNN_ERR_DIMENSION_MISMATCH);
  CHECK(std::string(gmmdnn_status_name(GMMDNN_ERR_DIMENSION_MISMATCH)).size() > 0);
  size_t cls = 99;
  CHECK(gmmdnn_spec_classify(spec, x, 2, &cls) == GMMDNN_OK);
  CHECK(cls < 2);

  std::vector<double> pts(2 * 100), pts2(2 * 100);
  std::vector<size_t> labels(100);
  CHECK(gmmdnn_spec_sample(spec, 100, 3, pts.data(), labels.data()) == GMMDNN_OK);
  CHECK(gmmdnn_spec_sample(spec, 100, 3, pts2.data(), nullptr) == GMMDNN_OK);
  CHECK(pts == pts2);
  for (auto l : labels) CHECK(l < 2);
  gmmdnn_spec_free(spec);
}

TEST_CASE("C API: invalid spec reports a located error") {
  gmmdnn_spec* spec = nullptr;
  CHECK(gmmdnn_spec_load((kData / "specs" / "invalid_priors.json").c_str(), &spec) ==
        GMMDNN_ERR_INVALID_SPEC);
  CHECK(spec == nullptr);
  const json e = json::parse(gmmdnn_last_error_json());
  CHECK(e["error"]["code"] == "InvalidSpec");
  CHECK(e["error"]["where"].get<std::string>().find("/classes") != std::string::npos);

  CHECK(gmmdnn_spec_parse("{\"n\": 1,", &spec) == GMMDNN_ERR_PARSE);
  CHECK(gmmdnn_spec_load("/nonexistent/spec.json", &spec) == GMMDNN_ERR_IO);
}

TEST_CASE("C API: reference network reproduces the discriminant; JSON round trip") {
  gmmdnn_spec* spec = nullptr;
  REQUIRE(gmmdnn_spec_load((kData / "specs" / "random8d.json").c_str(), &spec) == GMMDNN_OK);
  gmmdnn_net* net = nullptr;
  REQUIRE(gmmdnn_build_network(spec, 1, 0.5, 0.1, "reference", &net) == GMMDNN_OK);
  size_t in = 0, out = 0;
  CHECK(gmmdnn_net_dims(net, &in, &out) == GMMDNN_OK);
  CHECK(in == 8);
  CHECK(out == 1);

  char* text = nullptr;
  REQUIRE(gmmdnn_net_to_json(net, &text) == GMMDNN_OK);
  gmmdnn_net* back = nullptr;
  REQUIRE(gmmdnn_net_parse(text, &back) == GMMDNN_OK);
  gmmdnn_string_free(text);

  std::vector<double> pts(8 * 50);
  REQUIRE(gmmdnn_spec_sample(spec, 50, 9, pts.data(), nullptr) == GMMDNN_OK);
  for (size_t i = 0; i < 50; ++i) {
    const double* x = pts.data() + 8 * i;
    double ld = 0.0, y = 0.0, y2 = 0.0;
    REQUIRE(gmmdnn_spec_log_discriminant(spec, 1, x, 8, &ld) == GMMDNN_OK);
    REQUIRE(gmmdnn_net_eval(net, x, 8, &y, 1) == GMMDNN_OK);
    REQUIRE(gmmdnn_net_eval(back, x, 8, &y2, 1) == GMMDNN_OK);
    CHECK(std::abs(y - std::exp(ld)) <= 1e-10 * std::exp(ld));
    CHECK(y == y2);
  }
  double buf[1];
  CHECK(gmmdnn_net_eval(net, pts.data(), 7, buf, 1) == GMMDNN_ERR_DIMENSION_MISMATCH);
  CHECK(gmmdnn_build_network(spec, 0, 0.5, 0.1, "bogus", &back) == GMMDNN_ERR_INVALID_ARGUMENT);
  CHECK(gmmdnn_build_network(spec, 0, 0.0, 0.1, "smooth", &back) == GMMDNN_ERR_DELTA_OUT_OF_RANGE);
  CHECK(gmmdnn_build_network(spec, 0, 0.5, 1.5, "smooth", &back) == GMMDNN_ERR_Q_OUT_OF_RANGE);
  gmmdnn_net_free(back);
  gmmdnn_net_free(net);
  gmmdnn_spec_free(spec);
}

TEST_CASE("C API: shallow bound") {
  double b = 0.0;
  CHECK(gmmdnn_shallow_bound(40, 1.0, 1.0, 4, 1.0, &b) == GMMDNN_OK);
  CHECK(std::abs(b - 0.7322) < 1e-3);
  CHECK(gmmdnn_shallow_bound(40, 1.0, 1.0, 0, 1.0, &b) == GMMDNN_ERR_INVALID_ARGUMENT);
}

TEST_CASE("experiment: construct-deep artifacts, rerun determinism and reload") {
  TempDir tmp;
  const fs::path out = tmp.path / "deep";
  const fs::path cfg = write_config(tmp.path, "deep.json", deep_config(out));
  int code = -1;
  char* summary = nullptr;
  REQUIRE(gmmdnn_run_experiment(cfg.c_str(), nullptr, &code, &summary) == GMMDNN_OK);
  CHECK(code == 0);
  CHECK(std::string(summary).find("verdict") != std::string::npos);
  gmmdnn_string_free(summary);
  for (const char* f : {"params.json", "network.json", "report.json", "table.csv", "series.csv"}) {
    CHECK(fs::exists(out / f));
  }
  CHECK_FALSE(fs::exists(out / ".gmmdnn.lock"));
  const std::string table = slurp(out / "table.csv");
  const std::string series = slurp(out / "series.csv");
  CHECK(table.find('\r') == std::string::npos);
  CHECK(table.rfind("class,", 0) == 0);

  const json report = json::parse(slurp(out / "report.json"));
  CHECK(report.contains("verdict"));

  // Same seed, second directory: byte-identical tables.
  gmmdnn_run_options opt{};
  const std::string out2 = (tmp.path / "deep2").string();
  opt.out_dir = out2.c_str();
  REQUIRE(gmmdnn_run_experiment(cfg.c_str(), &opt, &code, nullptr) == GMMDNN_OK);
  CHECK(slurp(fs::path(out2) / "table.csv") == table);
  CHECK(slurp(fs::path(out2) / "series.csv") == series);
  CHECK(slurp(fs::path(out2) / "network.json") == slurp(out / "network.json"));

  // A different seed changes the Monte Carlo columns.
  opt.has_seed = 1;
  opt.seed = 6;
  const std::string out3 = (tmp.path / "deep3").string();
  opt.out_dir = out3.c_str();
  REQUIRE(gmmdnn_run_experiment(cfg.c_str(), &opt, &code, nullptr) == GMMDNN_OK);
  CHECK(slurp(fs::path(out3) / "table.csv") != table);

  // The saved network verifies again through verify-dq.
  json v = deep_config(tmp.path / "reverify");
  v["kind"] = "verify-dq";
  v["network"] = (out / "network.json").string();
  const fs::path vcfg = write_config(tmp.path, "verify.json", v);
  REQUIRE(gmmdnn_run_experiment(vcfg.c_str(), nullptr, &code, nullptr) == GMMDNN_OK);
  CHECK(code == 0);
}

TEST_CASE("experiment: lock file and failed runs leave nothing behind") {
  TempDir tmp;
  const fs::path out = tmp.path / "locked";
  fs::create_directories(out);
  std::ofstream(out / ".gmmdnn.lock") << "";
  const fs::path cfg = write_config(tmp.path, "deep.json", deep_config(out));
  int code = -1;
  CHECK(gmmdnn_run_experiment(cfg.c_str(), nullptr, &code, nullptr) == GMMDNN_ERR_IO);
  CHECK_FALSE(fs::exists(out / "table.csv"));
  CHECK(fs::exists(out / ".gmmdnn.lock"));

  const fs::path bad_out = tmp.path / "bad";
  const fs::path bad =
      write_config(tmp.path, "bad.json", deep_config(bad_out, "invalid_priors.json"));
  CHECK(gmmdnn_run_experiment(bad.c_str(), nullptr, &code, nullptr) == GMMDNN_ERR_INVALID_SPEC);
  CHECK_FALSE(fs::exists(bad_out / "table.csv"));
  CHECK_FALSE(fs::exists(bad_out / ".gmmdnn.lock"));

  json missing = deep_config(tmp.path / "m");
  missing.erase("seed");
  const fs::path m = write_config(tmp.path, "missing.json", missing);
  CHECK(gmmdnn_run_experiment(m.c_str(), nullptr, &code, nullptr) == GMMDNN_ERR_INVALID_ARGUMENT);
  CHECK(json::parse(gmmdnn_last_error_json())["error"]["where"] == "/seed");

  gmmdnn_run_options opt{};
  opt.kind = "classify";
  CHECK(gmmdnn_run_experiment(cfg.c_str(), &opt, &code, nullptr) == GMMDNN_ERR_INVALID_ARGUMENT);
}

TEST_CASE("describe agrees with the solved parameters") {
  TempDir tmp;
  gmmdnn_spec* spec = nullptr;
  REQUIRE(gmmdnn_spec_load((kData / "specs" / "mix1d_3.json").c_str(), &spec) == GMMDNN_OK);
  for (double delta : {0.1, 0.5}) {
    char* params = nullptr;
    REQUIRE(gmmdnn_params_json(spec, 0, delta, 0.1, &params) == GMMDNN_OK);
    const json p = json::parse(params);
    gmmdnn_string_free(params);

    json cfg = deep_config(tmp.path / "unused", "mix1d_3.json");
    cfg["delta"] = delta;
    const fs::path path = write_config(tmp.path, "describe.json", cfg);
    char* text = nullptr;
    REQUIRE(gmmdnn_describe(path.c_str(), &text) == GMMDNN_OK);
    const std::string d = text;
    gmmdnn_string_free(text);
    REQUIRE(p["components"].size() == 3);
    for (const auto& comp : p["components"]) {
      const auto k = comp["K"].get<long long>();
      CHECK(d.find("K = " + std::to_string(k) + "\n") != std::string::npos);
    }
    CHECK(d.find("n = 1") != std::string::npos);
    CHECK(d.find("k = 3") != std::string::npos);
    CHECK_FALSE(fs::exists(tmp.path / "unused"));
  }
  gmmdnn_spec_free(spec);

  char* text = nullptr;
  REQUIRE(gmmdnn_describe((kData / "specs" / "random8d.json").c_str(), &text) == GMMDNN_OK);
  CHECK(std::string(text).find("n = 8") != std::string::npos);
  gmmdnn_string_free(text);
}

TEST_CASE("CLI exit codes") {
  TempDir tmp;
  std::string err;
  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("construct-deep") == 2);
  CHECK(run_cli("no-such-command") == 2);
  CHECK(run_cli("describe /nonexistent.json", &err) == 2);
  CHECK(json::parse(err)["error"]["code"] == "Io");

  const fs::path bad =
      write_config(tmp.path, "bad.json", deep_config(tmp.path / "bad", "invalid_priors.json"));
  CHECK(run_cli("construct-deep --config '" + bad.string() + "'", &err) == 2);
  const json e = json::parse(err);
  CHECK(e["error"]["code"] == "InvalidSpec");
  CHECK(e["error"]["where"].get<std::string>().find("/classes") != std::string::npos);

  const fs::path good = write_config(tmp.path, "good.json", deep_config(tmp.path / "good"));
  CHECK(run_cli("construct-deep --config '" + good.string() + "' --samples 2000") == 0);
  CHECK(fs::exists(tmp.path / "good" / "table.csv"));
  CHECK(run_cli("verify-dq --config '" + good.string() + "'") == 2);
}
