#include <doctest.h>

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "expinf/io/csv.hpp"
#include "expinf/rng.hpp"
#include "expinf/types.hpp"

namespace {

const std::string kCli = EXPINF_CLI_PATH;
const std::string kDir = "/tmp/expinf_cli_test";

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// y = 2 x1 - 1.5 x3 + 0.2 eps on five covariate columns.
std::string synthetic_csv(std::uint64_t seed) {
  expinf::RngStream rng(seed, 0);
  std::ostringstream out;
  out << "y,x1,x2,x3,x4,x5\n";
  for (int i = 0; i < 120; ++i) {
    double x[5];
    for (double& v : x) v = rng.normal();
    const double y = 2.0 * x[0] - 1.5 * x[2] + 0.2 * rng.normal();
    out << expinf::io::format_double(y);
    for (double v : x) out << ',' << expinf::io::format_double(v);
    out << "\n";
  }
  return out.str();
}

const char* kStudyConfig = R"(n = 60
p = 24
tau = 0.5
cov = toeplitz
xi = 0.5
pattern = dirac4
k = 0
error = normal
dgp = homoscedastic
method = la-la
test = 1
alpha = 0.05
replicates = 4
seed = 3
)";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("setup") {
    std::system(("mkdir -p " + kDir).c_str());
  }

  TEST_CASE("version and usage errors") {
    CHECK(run("version") == 0);
    CHECK(run("analyze --definitely-not-a-flag") == 1);
    CHECK(run("") == 1);
    CHECK(run("analyze --y y") == 1);  // missing --input
  }

  TEST_CASE("data errors exit with code 2") {
    write_file(kDir + "/bad.csv", "a,b\n1,oops\n");
    CHECK(run("analyze --input " + kDir + "/bad.csv --y a") == 2);
    write_file(kDir + "/ok.csv", synthetic_csv(1));
    CHECK(run("analyze --input " + kDir + "/ok.csv --y nosuch") == 2);
    CHECK(run("analyze --input " + kDir + "/ok.csv --y y --test zz") == 2);
    write_file(kDir + "/bad.cfg", "n = 10\n");
    CHECK(run("simulate --config " + kDir + "/bad.cfg") == 2);
  }

  TEST_CASE("analyze end to end on the synthetic fixture") {
    int good = 0;
    const int rolls = 20;
    for (int s = 0; s < rolls; ++s) {
      const std::string csv = kDir + "/fix" + std::to_string(s) + ".csv";
      const std::string out = kDir + "/fix" + std::to_string(s);
      write_file(csv, synthetic_csv(1000 + s));
      REQUIRE(run("analyze --input " + csv + " --y y --tau 0.5 --method la-la --out " + out +
                  " --seed " + std::to_string(s)) == 0);
      nlohmann::json rep = nlohmann::json::parse(slurp(out + ".json"));
      const auto& coefs = rep["results"][0]["coefficients"];
      bool x1_in = false, x3_in = false, zeros_ok = true;
      for (const auto& c : coefs) {
        const std::string name = c["name"].get<std::string>();
        const double beta = c["beta"].get<double>();
        const double p = c["p_value"].get<double>();
        if (name == "x1") x1_in = beta != 0.0;
        if (name == "x3") x3_in = beta != 0.0;
        if (name == "x2" || name == "x4" || name == "x5") {
          if (p <= 0.05) zeros_ok = false;
        }
      }
      if (x1_in && x3_in && zeros_ok) ++good;
    }
    CHECK(good >= 18);  // >= 90% of the seeded re-rolls
  }

  TEST_CASE("analyze report json survives a reparse bit-exactly") {
    const std::string csv = kDir + "/fix_rt.csv";
    const std::string out = kDir + "/fix_rt";
    write_file(csv, synthetic_csv(5));
    REQUIRE(run("analyze --input " + csv + " --y y --tau 0.3,0.7 --test x2,x4 --out " + out) ==
            0);
    const std::string text = slurp(out + ".json");
    nlohmann::json first = nlohmann::json::parse(text);
    nlohmann::json second = nlohmann::json::parse(first.dump());
    CHECK(first == second);
    CHECK(first["results"].size() == 2);
    CHECK(first["results"][0]["tests"].size() == 1);
    CHECK(first["results"][0]["tests"][0]["df"].get<int>() == 2);
  }

  TEST_CASE("simulate runs are byte-identical across reruns and thread counts") {
    write_file(kDir + "/study.cfg", kStudyConfig);
    REQUIRE(run("simulate --config " + kDir + "/study.cfg --out " + kDir + "/s1 --threads 1") ==
            0);
    REQUIRE(run("simulate --config " + kDir + "/study.cfg --out " + kDir + "/s2 --threads 2") ==
            0);
    CHECK(slurp(kDir + "/s1.csv") == slurp(kDir + "/s2.csv"));
    CHECK(slurp(kDir + "/s1.json") == slurp(kDir + "/s2.json"));
    // overrides propagate
    REQUIRE(run("simulate --config " + kDir + "/study.cfg --out " + kDir +
                "/s3 --replicates 2 --seed 9") == 0);
    nlohmann::json j = nlohmann::json::parse(slurp(kDir + "/s3.json"));
    CHECK(j["config"]["replicates"].get<int>() == 2);
    CHECK(j["config"]["seed"].get<std::uint64_t>() == 9);
    CHECK(j["studies"][0]["replicates"].size() == 2);
  }

  TEST_CASE("cv subcommand writes the lambda table") {
    const std::string csv = kDir + "/fix_cv.csv";
    write_file(csv, synthetic_csv(77));
    REQUIRE(run("cv --input " + csv + " --y y --tau 0.5 --out " + kDir + "/cv.csv") == 0);
    const auto table = expinf::io::read_csv(kDir + "/cv.csv");
    CHECK(table.headers == std::vector<std::string>{"lambda", "mean_heldout_loss", "selected"});
    CHECK(table.values.rows() == 50);
    CHECK(table.values.col(2).sum() == 1.0);  // exactly one selected row
    // lambdas decreasing
    for (expinf::Index i = 1; i < table.values.rows(); ++i) {
      CHECK(table.values(i, 0) < table.values(i - 1, 0));
    }
  }
}
