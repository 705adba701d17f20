#include "fareyesc/cli.hpp"
#include "fareyesc/holes.hpp"
#include "fareyesc/operator.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace fareyesc;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fareyesc");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string value_of(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + " ", 0) == 0) return line.substr(key.size() + 1);
  }
  return {};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("fareyesc_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("fnv1a64 reference vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  }

  TEST_CASE("entry with mu = 0 prints closed_m/2 + closed_n") {
    const Run r = cli({"entry", "--j", "0", "--nu", "0", "--mu", "0", "--eps", "0"});
    CHECK(r.code == kExitOk);
    CHECK(std::stod(value_of(r.out, "value")) == closed_m_entry(0, 0) / 2 + closed_n_entry(0, 0));
  }

  TEST_CASE("entry matches the library call bit-exactly") {
    const Run r = cli({"entry", "--j", "0", "--nu", "0", "--mu", "2", "--eps", "-1"});
    CHECK(r.code == kExitOk);
    CHECK(std::strtod(value_of(r.out, "value").c_str(), nullptr) == open_entry(0, 0, HoleParams(-1, 2)));
    CHECK(r.out.rfind("# fareyesc entry\n# config_hash ", 0) == 0);
    CHECK(r.out.find("# params {") != std::string::npos);
  }

  TEST_CASE("usage errors exit with 2") {
    CHECK(cli({"entry", "--j", "0", "--nu", "zero", "--eps", "0"}).code == kExitUsage);
    CHECK(cli({"entry", "--bogus"}).code == kExitUsage);
    CHECK(cli({"frobnicate"}).code == kExitUsage);
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"measure", "--mu", "1", "--eps", "0.7"}).code == kExitUsage);
    CHECK(cli({"measure", "--mu", "1", "--eps", "abc"}).code == kExitUsage);
    CHECK(cli({"--help"}).code == kExitOk);
  }

  TEST_CASE("non-convergent series exits with 3") {
    const Run r = cli({"entry", "--j", "2", "--nu", "2", "--mu", "3.5", "--eps", "-1e4", "--n-cap", "5"});
    CHECK(r.code == kExitNonConvergent);
    CHECK(r.err.find("non-convergent") != std::string::npos);
  }

  TEST_CASE("measure surfaces the hole measure") {
    const Run r = cli({"measure", "--mu", "3", "--eps", "-20"});
    CHECK(r.code == kExitOk);
    CHECK(std::stod(value_of(r.out, "hole_measure")) == hole_measure(HoleParams(-20, 3)).value);
    CHECK(cli({"measure", "--mu", "1", "--eps", "-inf"}).code == kExitOk);
  }

  TEST_CASE("json config with flag override") {
    TempDir dir("config");
    const fs::path cfg = dir.path / "c.json";
    std::ofstream(cfg) << R"({"mu": 3, "eps": "-20"})";
    const Run a = cli({"measure", "--config", cfg.string()});
    CHECK(a.code == kExitOk);
    CHECK(std::stod(value_of(a.out, "hole_measure")) == hole_measure(HoleParams(-20, 3)).value);
    const Run b = cli({"measure", "--config", cfg.string(), "--mu", "3.5"});
    CHECK(std::stod(value_of(b.out, "hole_measure")) == hole_measure(HoleParams(-20, 3.5)).value);
    std::ofstream(cfg) << R"({"mu": 3, "eps": "-20", "colour": 1})";
    CHECK(cli({"measure", "--config", cfg.string()}).code == kExitUsage);
    std::ofstream(cfg) << "{ not json";
    CHECK(cli({"measure", "--config", cfg.string()}).code == kExitUsage);
  }

  TEST_CASE("curve output is byte-identical on re-run") {
    TempDir a("curve_a"), b("curve_b");
    const std::vector<std::string> base = {"curve", "--mu", "1,2", "--eps", "0.1,-1", "-N", "12"};
    auto with_dir = [&](const fs::path& d) {
      auto v = base;
      v.push_back("--output-dir");
      v.push_back(d.string());
      return v;
    };
    REQUIRE(cli(with_dir(a.path)).code == kExitOk);
    REQUIRE(cli(with_dir(b.path)).code == kExitOk);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a.path)) {
      ++files;
      CHECK(slurp(e.path()) == slurp(b.path / e.path().filename()));
    }
    CHECK(files == 5);
    const std::string csv = slurp(a.path / "curve_mu1.csv");
    CHECK(csv.find("mu,epsilon,N,hole_measure") != std::string::npos);
    const std::string ref = slurp(a.path / "reference_curves.csv");
    CHECK(ref.find("mu,hole_measure,t,t_over_minus_log_t") != std::string::npos);
  }

  TEST_CASE("empty epsilon grid is rejected before any output") {
    TempDir d("empty");
    const Run r = cli({"curve", "--eps", "", "--output-dir", d.path.string()});
    CHECK(r.code == kExitUsage);
    CHECK(fs::is_empty(d.path));
  }

  TEST_CASE("matrix honours the output directory variable") {
    TempDir d("env");
    ::setenv(kOutputDirEnv, d.path.c_str(), 1);
    const Run r = cli({"matrix", "-N", "5"});
    ::unsetenv(kOutputDirEnv);
    CHECK(r.code == kExitOk);
    const std::string csv = slurp(d.path / "matrix_closed_N5.csv");
    CHECK(csv.find("j,0,1,2,3,4") != std::string::npos);
    const Run s = cli({"matrix", "-N", "3", "--kind", "open", "--mu", "2", "--eps", "-1", "--format",
                       "json", "--output", "-"});
    CHECK(s.code == kExitOk);
    const nlohmann::json j = nlohmann::json::parse(s.out);
    CHECK(j.at("meta").at("command") == "matrix");
    CHECK(matrix_from_json(j).entries(0, 0) == open_entry(0, 0, HoleParams(-1, 2)));
  }

  TEST_CASE("seeded Monte Carlo is reproducible") {
    const std::vector<std::string> args = {"mc", "--samples", "5000", "--steps", "12", "--eps", "0.2", "--seed", "99"};
    const Run a = cli(args), b = cli(args);
    CHECK(a.code == kExitOk);
    CHECK(a.out == b.out);
    auto other = args;
    other.back() = "100";
    CHECK(cli(other).out != a.out);
  }

  TEST_CASE("eig, ulam and km commands") {
    const Run e = cli({"eig", "-N", "16", "--kind", "open", "--mu", "2", "--eps", "0.1"});
    CHECK(e.code == kExitOk);
    CHECK(std::stod(value_of(e.out, "gamma")) > 0);
    const Run u = cli({"ulam", "--bins", "128", "--eps", "0"});
    CHECK(u.code == kExitOk);
    CHECK(std::fabs(std::stod(value_of(u.out, "lambda")) - 1) < 1e-10);
    const Run k = cli({"km", "--n", "2"});
    CHECK(k.code == kExitOk);
    CHECK(k.out.find("\n2,0.5,0.69314718055994529,") != std::string::npos);
  }
}
