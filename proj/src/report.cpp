#include "fairkrr/report.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fairkrr {

namespace {
constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;
}  // namespace

std::uint64_t fnv1a64_append(std::uint64_t state, const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    state ^= bytes[i];
    state *= kFnvPrime;
  }
  return state;
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  return fnv1a64_append(kFnvOffset, data, size);
}

std::string hex64(std::uint64_t value) {
  static const char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read file for hashing: " + path);
  std::uint64_t state = kFnvOffset;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    state = fnv1a64_append(state, buf, static_cast<std::size_t>(in.gcount()));
  return state;
}

std::uint64_t hash_samples(const std::vector<Sample>& samples) {
  std::uint64_t state = kFnvOffset;
  auto put64 = [&state](std::uint64_t v) { state = fnv1a64_append(state, &v, 8); };
  auto put_double = [&](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put64(bits);
  };
  put64(samples.size());
  put64(samples.empty() ? 0 : samples.front().x.size());
  for (const auto& s : samples) {
    for (double v : s.x) put_double(v);
    put_double(s.s);
    put_double(s.y);
  }
  return state;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string folds_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "repetition,fold,lambda,gamma,mape,dgf,delta_hat\n";
  for (const auto& f : report.folds)
    out << f.repetition << ',' << f.fold << ',' << format_double(f.lambda) << ','
        << format_double(f.gamma) << ',' << format_double(f.mape) << ','
        << format_double(f.dgf) << ',' << format_double(f.delta_hat) << '\n';
  return out.str();
}

std::string histogram_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "k,q,p_hat\n";
  for (Eigen::Index k = 0; k < report.p_hat_mean.rows(); ++k)
    for (Eigen::Index q = 0; q < report.p_hat_mean.cols(); ++q)
      out << k << ',' << q << ',' << format_double(report.p_hat_mean(k, q)) << '\n';
  return out.str();
}

std::string experiment_document(const ExperimentReport& report,
                                const std::string& resolved_config_json,
                                std::uint64_t data_hash) {
  nlohmann::json doc;
  doc["config"] = nlohmann::json::parse(resolved_config_json);
  doc["data_hash"] = "fnv1a64:" + hex64(data_hash);

  nlohmann::json rep;
  rep["repetitions"] = report.repetitions;
  rep["folds_per_rep"] = report.folds_per_rep;
  rep["incomplete"] = report.incomplete;
  rep["warnings"] = report.warnings;

  nlohmann::json agg;
  agg["mape_mean"] = report.mape_mean;
  agg["mape_std"] = report.mape_std;
  agg["dgf_mean"] = report.dgf_mean;
  agg["dgf_std"] = report.dgf_std;
  agg["dgf_kq2_mean"] = report.dgf_kq2_mean;
  agg["dgf_raw_mean"] = report.dgf_raw_mean;
  agg["delta_hat_mean"] = report.delta_hat_mean;
  agg["delta_hat_raw_mean"] = report.delta_hat_raw_mean;
  rep["aggregates"] = agg;

  rep["per_repetition"] = {{"mape", report.per_repetition_mape},
                           {"dgf", report.per_repetition_dgf}};

  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : report.folds) {
    nlohmann::json row;
    row["repetition"] = f.repetition;
    row["fold"] = f.fold;
    row["lambda"] = f.lambda;
    row["gamma"] = f.gamma;
    row["mape"] = f.mape;
    row["dgf"] = f.dgf;
    row["dgf_kq2"] = f.dgf_kq2;
    row["dgf_raw"] = f.dgf_raw;
    row["delta_hat"] = f.delta_hat;
    row["delta_hat_raw"] = f.delta_hat_raw;
    folds.push_back(row);
  }
  rep["folds"] = folds;

  nlohmann::json chosen = nlohmann::json::array();
  for (const auto& [lambda, gamma, count] : report.chosen_histogram) {
    nlohmann::json row;
    row["lambda"] = lambda;
    row["gamma"] = gamma;
    row["count"] = count;
    chosen.push_back(row);
  }
  rep["chosen_hyperparameters"] = chosen;

  nlohmann::json p_mean = nlohmann::json::array();
  nlohmann::json p_folds = nlohmann::json::array();
  for (Eigen::Index k = 0; k < report.p_hat_mean.rows(); ++k) {
    nlohmann::json row_m = nlohmann::json::array();
    nlohmann::json row_f = nlohmann::json::array();
    for (Eigen::Index q = 0; q < report.p_hat_mean.cols(); ++q) {
      row_m.push_back(report.p_hat_mean(k, q));
      row_f.push_back(report.p_hat_folds(k, q));
    }
    p_mean.push_back(row_m);
    p_folds.push_back(row_f);
  }
  rep["p_hat"] = {{"mean", p_mean}, {"folds", p_folds}};

  doc["report"] = rep;
  return doc.dump(2) + "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open for writing: " + path);
  out << content;
  if (!out) throw InvalidArgument("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace fairkrr
