#include "expinf/io/study_config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "expinf/errors.hpp"

namespace expinf::io {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double to_double(const std::string& key, const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) {
    throw DataError("config key '" + key + "': cannot parse '" + s + "' as a number");
  }
  return v;
}

long to_long(const std::string& key, const std::string& s) {
  const double v = to_double(key, s);
  const long l = static_cast<long>(v);
  if (static_cast<double>(l) != v) {
    throw DataError("config key '" + key + "': expected an integer, got '" + s + "'");
  }
  return l;
}

std::vector<double> to_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw DataError("config key '" + key + "': empty list entry");
    out.push_back(to_double(key, item));
  }
  if (out.empty()) throw DataError("config key '" + key + "': empty list");
  return out;
}

}  // namespace

StudyFile read_study_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);

  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw DataError("config line " + std::to_string(lineno) + ": empty key or value");
    }
    if (!kv.emplace(key, value).second) {
      throw DataError("config: duplicate key '" + key + "'");
    }
  }

  static const std::vector<std::string> known = {
      "n",       "p",     "tau",        "cov",   "xi",          "varsigma",
      "pattern", "k",     "error",      "dgp",   "method",      "test",
      "test_r",  "test_c", "alpha",     "seed",  "replicates",  "noise_scale",
      "cv_folds", "nodewise_max_columns"};
  for (const auto& [key, value] : kv) {
    (void)value;
    bool ok = false;
    for (const auto& k : known) {
      if (k == key) {
        ok = true;
        break;
      }
    }
    if (!ok) throw DataError("config: unknown key '" + key + "'");
  }

  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("config: missing required key '" + key + "'");
    return it->second;
  };
  auto get = [&](const std::string& key, const std::string& fallback) -> std::string {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  };

  StudyFile out;
  StudyConfig& cfg = out.config;
  cfg.n = to_long("n", need("n"));
  cfg.p = to_long("p", need("p"));
  cfg.tau = to_double("tau", need("tau"));

  const std::string cov = need("cov");
  if (cov == "toeplitz") {
    cfg.cov = CovarianceDesign::toeplitz(to_double("xi", need("xi")),
                                         static_cast<int>(cfg.p));
  } else if (cov == "scalefree") {
    cfg.cov = CovarianceDesign::scalefree(
        static_cast<int>(to_long("varsigma", need("varsigma"))), static_cast<int>(cfg.p));
  } else {
    throw DataError("config: cov must be 'toeplitz' or 'scalefree', got '" + cov + "'");
  }

  const std::string pattern = need("pattern");
  if (pattern == "dirac4") {
    cfg.pattern.kind = CoefficientPattern::Kind::dirac4;
  } else if (pattern == "dirac10") {
    cfg.pattern.kind = CoefficientPattern::Kind::dirac10;
  } else if (pattern == "unif4") {
    cfg.pattern.kind = CoefficientPattern::Kind::unif4;
  } else if (pattern == "unif10") {
    cfg.pattern.kind = CoefficientPattern::Kind::unif10;
  } else {
    throw DataError("config: unknown pattern '" + pattern + "'");
  }

  out.k_values = to_list("k", get("k", "0"));
  cfg.pattern.k = out.k_values.front();

  const std::string error = need("error");
  if (error == "normal") {
    cfg.error = ErrorDist::std_normal;
  } else if (error == "t4") {
    cfg.error = ErrorDist::student_t4;
  } else {
    throw DataError("config: error must be 'normal' or 't4', got '" + error + "'");
  }

  const std::string dgp = need("dgp");
  if (dgp == "homoscedastic") {
    cfg.dgp = Dgp::homoscedastic;
  } else if (dgp == "heteroscedastic") {
    cfg.dgp = Dgp::heteroscedastic;
  } else {
    throw DataError("config: dgp must be 'homoscedastic' or 'heteroscedastic'");
  }

  const std::string method = need("method");
  if (method == "la-la") {
    cfg.method = StudyMethod::la_la;
  } else if (method == "sc-sc") {
    cfg.method = StudyMethod::sc_sc;
  } else {
    throw DataError("config: method must be 'la-la' or 'sc-sc', got '" + method + "'");
  }

  if (kv.count("test") && kv.count("test_r")) {
    throw DataError("config: give either 'test' coordinates or an explicit 'test_r', not both");
  }
  Vector c_vec;
  if (kv.count("test_c")) {
    const auto c_list = to_list("test_c", kv.at("test_c"));
    c_vec.resize(static_cast<Index>(c_list.size()));
    for (std::size_t i = 0; i < c_list.size(); ++i) c_vec(static_cast<Index>(i)) = c_list[i];
  }
  if (kv.count("test_r")) {
    std::vector<std::vector<double>> rows;
    std::stringstream ss(kv.at("test_r"));
    std::string row;
    while (std::getline(ss, row, ';')) {
      std::vector<double> vals;
      std::stringstream rs(row);
      std::string tok;
      while (rs >> tok) vals.push_back(to_double("test_r", tok));
      if (static_cast<Index>(vals.size()) != cfg.p) {
        throw DataError("config: test_r row has " + std::to_string(vals.size()) +
                        " entries, expected p = " + std::to_string(cfg.p));
      }
      rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw DataError("config: test_r is empty");
    Matrix r(static_cast<Index>(rows.size()), cfg.p);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (Index j = 0; j < cfg.p; ++j) r(static_cast<Index>(i), j) = rows[i][j];
    }
    if (c_vec.size() == 0) c_vec = Vector::Zero(r.rows());
    cfg.hypothesis = Hypothesis::explicit_rc(std::move(r), std::move(c_vec));
  } else {
    const auto coords = to_list("test", need("test"));
    std::vector<Index> zero_based;
    for (double c : coords) {
      const long idx = static_cast<long>(c);
      if (static_cast<double>(idx) != c || idx < 1 || idx > cfg.p) {
        throw DataError("config: test coordinates must be integers in [1, p]");
      }
      zero_based.push_back(static_cast<Index>(idx - 1));
    }
    cfg.hypothesis = Hypothesis::on_coordinates(zero_based, cfg.p, std::move(c_vec));
  }

  cfg.alpha = to_double("alpha", get("alpha", "0.05"));
  cfg.seed = static_cast<std::uint64_t>(to_long("seed", need("seed")));
  cfg.replicates = static_cast<int>(to_long("replicates", need("replicates")));
  cfg.noise_scale = to_double("noise_scale", get("noise_scale", "1"));
  cfg.cv_folds = static_cast<int>(to_long("cv_folds", get("cv_folds", "10")));
  cfg.nodewise_max_columns =
      static_cast<int>(to_long("nodewise_max_columns", get("nodewise_max_columns", "50")));

  cfg.validate();
  return out;
}

}  // namespace expinf::io
