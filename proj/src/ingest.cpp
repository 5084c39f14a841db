#include "fairkrr/ingest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "fairkrr/rng.hpp"

namespace fairkrr {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

bool is_missing(double v) { return std::isnan(v); }

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

double parse_cell(const std::string& cell, const std::string& where) {
  if (cell.empty() || cell == "?") return kMissing;
  const char* begin = cell.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + cell.size())
    throw InvalidArgument("unparseable numeric value '" + cell + "' at " + where);
  return v;
}

std::vector<std::vector<double>> read_table(const std::string& path,
                                            std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (header && line_no == 1) {
      *header = cells;
      width = cells.size();
      continue;
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      std::ostringstream msg;
      msg << path << " line " << line_no << ": expected " << width
          << " fields, found " << cells.size();
      throw InvalidArgument(msg.str());
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::ostringstream where;
      where << path << " line " << line_no << " column " << c + 1;
      row.push_back(parse_cell(cells[c], where.str()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidArgument(path + ": no data rows");
  return rows;
}

double column_mean(const std::vector<std::vector<double>>& rows, std::size_t col,
                   std::size_t* missing_count = nullptr) {
  double sum = 0.0;
  std::size_t n = 0, miss = 0;
  for (const auto& r : rows) {
    if (is_missing(r[col]))
      ++miss;
    else {
      sum += r[col];
      ++n;
    }
  }
  if (missing_count) *missing_count = miss;
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

// Attribute names of the raw communities-and-crime file, in file order.
constexpr std::array<const char*, 128> kCrimeColumns = {
    "state", "county", "community", "communityname", "fold", "population",
    "householdsize", "racepctblack", "racePctWhite", "racePctAsian", "racePctHisp",
    "agePct12t21", "agePct12t29", "agePct16t24", "agePct65up", "numbUrban",
    "pctUrban", "medIncome", "pctWWage", "pctWFarmSelf", "pctWInvInc", "pctWSocSec",
    "pctWPubAsst", "pctWRetire", "medFamInc", "perCapInc", "whitePerCap",
    "blackPerCap", "indianPerCap", "AsianPerCap", "OtherPerCap", "HispPerCap",
    "NumUnderPov", "PctPopUnderPov", "PctLess9thGrade", "PctNotHSGrad",
    "PctBSorMore", "PctUnemployed", "PctEmploy", "PctEmplManu", "PctEmplProfServ",
    "PctOccupManu", "PctOccupMgmtProf", "MalePctDivorce", "MalePctNevMarr",
    "FemalePctDiv", "TotalPctDiv", "PersPerFam", "PctFam2Par", "PctKids2Par",
    "PctYoungKids2Par", "PctTeen2Par", "PctWorkMomYoungKids", "PctWorkMom",
    "NumIlleg", "PctIlleg", "NumImmig", "PctImmigRecent", "PctImmigRec5",
    "PctImmigRec8", "PctImmigRec10", "PctRecentImmig", "PctRecImmig5",
    "PctRecImmig8", "PctRecImmig10", "PctSpeakEnglOnly", "PctNotSpeakEnglWell",
    "PctLargHouseFam", "PctLargHouseOccup", "PersPerOccupHous", "PersPerOwnOccHous",
    "PersPerRentOccHous", "PctPersOwnOccup", "PctPersDenseHous", "PctHousLess3BR",
    "MedNumBR", "HousVacant", "PctHousOccup", "PctHousOwnOcc", "PctVacantBoarded",
    "PctVacMore6Mos", "MedYrHousBuilt", "PctHousNoPhone", "PctWOFullPlumb",
    "OwnOccLowQuart", "OwnOccMedVal", "OwnOccHiQuart", "RentLowQ", "RentMedian",
    "RentHighQ", "MedRent", "MedRentPctHousInc", "MedOwnCostPctInc",
    "MedOwnCostPctIncNoMtg", "NumInShelters", "NumStreet", "PctForeignBorn",
    "PctBornSameState", "PctSameHouse85", "PctSameCity85", "PctSameState85",
    "LemasSwornFT", "LemasSwFTPerPop", "LemasSwFTFieldOps", "LemasSwFTFieldPerPop",
    "LemasTotalReq", "LemasTotReqPerPop", "PolicReqPerOffic", "PolicPerPop",
    "RacialMatchCommPol", "PctPolicWhite", "PctPolicBlack", "PctPolicHisp",
    "PctPolicAsian", "PctPolicMinor", "OfficAssgnDrugUnits", "NumKindsDrugsSeiz",
    "PolicAveOTWorked", "LandArea", "PopDens", "PctUsePubTrans", "PolicCars",
    "PolicOperBudg", "LemasPctPolicOnPatr", "LemasGangUnitDeploy",
    "LemasPctOfficDrugUn", "PolicBudgPerPop", "ViolentCrimesPerPop"};

constexpr std::size_t kCrimeSensitive = 7;    // racepctblack
constexpr std::size_t kCrimeTarget = 127;     // ViolentCrimesPerPop
constexpr std::size_t kCrimeIdentifiers = 5;  // leading non-predictive columns

}  // namespace

LoadedCsv load_csv(const std::string& path, const ColumnSpec& spec) {
  if (spec.target_column == spec.sensitive_column)
    throw InvalidArgument("target and sensitive columns must differ");

  std::vector<std::string> header;
  auto rows = read_table(path, &header);
  if (header.empty()) throw InvalidArgument(path + ": missing header row");

  auto column_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw InvalidArgument("column '" + name + "' not found in " + path);
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t target_col = column_of(spec.target_column);
  const std::size_t sensitive_col = column_of(spec.sensitive_column);

  std::vector<std::size_t> feature_cols;
  if (spec.feature_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (c != target_col && c != sensitive_col) feature_cols.push_back(c);
  } else {
    std::set<std::string> seen;
    for (const auto& name : spec.feature_columns) {
      if (!seen.insert(name).second)
        throw InvalidArgument("duplicate feature column '" + name + "'");
      std::size_t c = column_of(name);
      if (c == target_col || c == sensitive_col)
        throw InvalidArgument("feature column '" + name +
                              "' is the target or sensitive column");
      feature_cols.push_back(c);
    }
  }
  if (feature_cols.empty()) throw InvalidArgument("no feature columns");

  LoadedCsv out;

  // Rows with a missing label can never be used.
  {
    std::vector<std::vector<double>> kept;
    std::size_t dropped = 0;
    for (auto& r : rows) {
      if (is_missing(r[target_col]) || is_missing(r[sensitive_col]))
        ++dropped;
      else
        kept.push_back(std::move(r));
    }
    if (dropped > 0)
      out.warnings.push_back(std::to_string(dropped) +
                             " row(s) dropped for missing target or sensitive value");
    rows = std::move(kept);
  }
  if (rows.empty()) throw InvalidArgument(path + ": all rows dropped");

  if (spec.missing_policy == MissingPolicy::drop_row) {
    std::vector<std::vector<double>> kept;
    std::size_t dropped = 0;
    for (auto& r : rows) {
      bool any = false;
      for (std::size_t c : feature_cols) any = any || is_missing(r[c]);
      if (any)
        ++dropped;
      else
        kept.push_back(std::move(r));
    }
    if (dropped > 0)
      out.warnings.push_back(std::to_string(dropped) +
                             " row(s) dropped for missing feature values");
    rows = std::move(kept);
    if (rows.empty()) throw InvalidArgument(path + ": all rows dropped");
  } else if (spec.missing_policy == MissingPolicy::drop_column) {
    std::vector<std::size_t> kept_cols;
    for (std::size_t c : feature_cols) {
      std::size_t miss = 0;
      column_mean(rows, c, &miss);
      if (static_cast<double>(miss) >
          spec.drop_column_threshold * static_cast<double>(rows.size()))
        out.dropped_columns.push_back(header[c]);
      else
        kept_cols.push_back(c);
    }
    feature_cols = std::move(kept_cols);
    if (feature_cols.empty())
      throw InvalidArgument("every feature column exceeded the missing threshold");
  }

  // Impute what is left (mean_impute policy, and drop_column survivors).
  if (spec.missing_policy != MissingPolicy::drop_row) {
    for (std::size_t c : feature_cols) {
      std::size_t miss = 0;
      double mean = column_mean(rows, c, &miss);
      if (miss == 0) continue;
      for (auto& r : rows)
        if (is_missing(r[c])) r[c] = mean;
    }
  }

  for (std::size_t c : feature_cols) out.feature_names.push_back(header[c]);

  out.samples.reserve(rows.size());
  for (const auto& r : rows) {
    Sample s;
    s.x.reserve(feature_cols.size());
    for (std::size_t c : feature_cols) s.x.push_back(r[c]);
    s.s = r[sensitive_col];
    s.y = r[target_col];
    out.samples.push_back(std::move(s));
  }

  if (spec.standardize) {
    const std::size_t d = feature_cols.size();
    out.feature_means.assign(d, 0.0);
    out.feature_stds.assign(d, 0.0);
    const double n = static_cast<double>(out.samples.size());
    for (const auto& s : out.samples)
      for (std::size_t j = 0; j < d; ++j) out.feature_means[j] += s.x[j];
    for (double& m : out.feature_means) m /= n;
    for (const auto& s : out.samples)
      for (std::size_t j = 0; j < d; ++j) {
        double dv = s.x[j] - out.feature_means[j];
        out.feature_stds[j] += dv * dv;
      }
    for (std::size_t j = 0; j < d; ++j) {
      out.feature_stds[j] = std::sqrt(out.feature_stds[j] / n);
      if (out.feature_stds[j] < 1e-12) {
        out.feature_stds[j] = 1e-12;
        out.warnings.push_back("constant column '" + out.feature_names[j] +
                               "' standardized to zero");
      }
    }
    for (auto& s : out.samples)
      for (std::size_t j = 0; j < d; ++j)
        s.x[j] = (s.x[j] - out.feature_means[j]) / out.feature_stds[j];
  }

  return out;
}

CrimeData prepare_crime(const std::string& path, CrimeVariant variant) {
  auto rows = read_table(path, nullptr);
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].size() != kCrimeColumns.size()) {
      std::ostringstream msg;
      msg << path << ": row " << i + 1 << " has " << rows[i].size()
          << " fields, expected " << kCrimeColumns.size()
          << " (is this the raw communities-and-crime file?)";
      throw InvalidArgument(msg.str());
    }

  // Labels must be present.
  {
    std::vector<std::vector<double>> kept;
    for (auto& r : rows)
      if (!is_missing(r[kCrimeTarget]) && !is_missing(r[kCrimeSensitive]))
        kept.push_back(std::move(r));
    rows = std::move(kept);
    if (rows.empty()) throw InvalidArgument(path + ": no usable rows");
  }

  CrimeData out;

  // Feature columns: everything except identifiers, sensitive, target;
  // mostly-missing columns dropped, the rest mean-imputed.
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = kCrimeIdentifiers; c < kCrimeColumns.size(); ++c) {
    if (c == kCrimeSensitive || c == kCrimeTarget) continue;
    std::size_t miss = 0;
    double mean = column_mean(rows, c, &miss);
    if (static_cast<double>(miss) > 0.5 * static_cast<double>(rows.size())) {
      out.dropped_columns.push_back(kCrimeColumns[c]);
      continue;
    }
    if (miss > 0)
      for (auto& r : rows)
        if (is_missing(r[c])) r[c] = mean;
    feature_cols.push_back(c);
    out.feature_names.push_back(kCrimeColumns[c]);
  }

  const std::size_t n = rows.size();
  std::vector<double> sensitive(n), target(n);
  for (std::size_t i = 0; i < n; ++i) {
    sensitive[i] = rows[i][kCrimeSensitive];
    target[i] = rows[i][kCrimeTarget];
  }

  if (variant == CrimeVariant::binary_sensitive) {
    // Calibrate the cut so the above-threshold group has 970 members, the
    // published split for this data. Scanning the distinct values finds the
    // closest achievable split; being off by more than 5 means the input is
    // not the expected file.
    std::vector<double> distinct(sensitive);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    double best_t = distinct.front();
    long best_diff = std::numeric_limits<long>::max();
    for (double t : distinct) {
      long count = static_cast<long>(
          std::count_if(sensitive.begin(), sensitive.end(),
                        [t](double v) { return v >= t; }));
      long diff = std::labs(count - 970);
      if (diff < best_diff) {
        best_diff = diff;
        best_t = t;
      }
    }
    out.threshold = best_t;
    for (std::size_t i = 0; i < n; ++i) {
      const bool high = sensitive[i] >= best_t;
      out.high_count += high;
      out.low_count += !high;
      (high ? out.high_mean_y : out.low_mean_y) += target[i];
    }
    if (out.high_count > 0) out.high_mean_y /= out.high_count;
    if (out.low_count > 0) out.low_mean_y /= out.low_count;
    if (std::labs(out.high_count - 970) > 5 || std::labs(out.low_count - 1024) > 5) {
      std::ostringstream msg;
      msg << "sensitive split calibration failed: got " << out.high_count << "/"
          << out.low_count << ", expected 970/1024 within 5 (wrong input file?)";
      throw InvalidArgument(msg.str());
    }
    out.s_grid = DiscretizationGrid{{-0.5, 0.5, 1.5}};
    for (std::size_t i = 0; i < n; ++i) sensitive[i] = sensitive[i] >= best_t ? 1.0 : 0.0;
  } else {
    out.s_grid = DiscretizationGrid{{0.0, 0.2, 0.4, 0.6, 0.8, 1.0 + 1e-9}};
    out.bin_occupancy.assign(static_cast<std::size_t>(out.s_grid.bins()), 0);
    for (double v : sensitive) {
      int b = out.s_grid.bin(v);
      if (b >= 0) ++out.bin_occupancy[static_cast<std::size_t>(b)];
    }
  }

  // Percentage errors need nonzero targets; many communities report a zero
  // crime rate, so the whole column is shifted by one hundredth.
  out.target_shifted =
      std::any_of(target.begin(), target.end(), [](double y) { return y == 0.0; });
  if (out.target_shifted)
    for (double& y : target) y += 0.01;

  out.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.x.reserve(feature_cols.size());
    for (std::size_t c : feature_cols) s.x.push_back(rows[i][c]);
    s.s = sensitive[i];
    s.y = target[i];
    out.samples.push_back(std::move(s));
  }
  return out;
}

void write_normalized_csv(const std::string& path, const std::vector<Sample>& samples,
                          const std::vector<std::string>& feature_names) {
  if (samples.empty()) throw InvalidArgument("nothing to write");
  if (feature_names.size() != samples.front().x.size())
    throw InvalidArgument("feature name count does not match feature dimension");
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw InvalidArgument("cannot open for writing: " + path);
  for (const auto& name : feature_names) outf << name << ',';
  outf << "sensitive,target\n";
  std::ostringstream buf;
  buf.precision(17);
  for (const auto& s : samples) {
    buf.str("");
    for (double v : s.x) buf << v << ',';
    buf << s.s << ',' << s.y << '\n';
    outf << buf.str();
  }
  if (!outf) throw InvalidArgument("write failed: " + path);
}

std::vector<Sample> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n <= 0 || spec.d <= 0)
    throw InvalidArgument("synthetic data needs n > 0 and d > 0");
  if (spec.noise_std < 0) throw InvalidArgument("noise_std must be >= 0");

  Rng coef_rng(mix_seed(spec.seed, 0xC0EF));
  std::vector<double> beta(static_cast<std::size_t>(spec.d));
  for (double& b : beta) b = coef_rng.gaussian();

  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.d));
  Rng rng(mix_seed(spec.seed, 0xDA7A));
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(spec.n));
  for (int i = 0; i < spec.n; ++i) {
    Sample s;
    s.s = spec.sensitive_kind == SensitiveKind::binary
              ? (rng.uniform() < 0.5 ? 0.0 : 1.0)
              : rng.uniform();
    // Features leak the sensitive value through a group-dependent mean shift;
    // the linear signal uses the unshifted draws so the y gap between groups
    // stays exactly group_effect.
    const double leak = 0.5 * spec.group_effect * (s.s - 0.5);
    s.x.resize(static_cast<std::size_t>(spec.d));
    double signal = 0.0;
    for (int j = 0; j < spec.d; ++j) {
      double z = rng.gaussian();
      s.x[static_cast<std::size_t>(j)] = z + leak;
      signal += beta[static_cast<std::size_t>(j)] * z;
    }
    s.y = 5.0 + scale * signal + spec.group_effect * (s.s - 0.5) +
          spec.noise_std * rng.gaussian();
    out.push_back(std::move(s));
  }
  return out;
}

DiscretizationGrid synthetic_s_grid(SensitiveKind kind, int bins) {
  if (kind == SensitiveKind::binary) return DiscretizationGrid{{-0.5, 0.5, 1.5}};
  if (bins < 1) throw InvalidArgument("sensitive grid needs at least one bin");
  std::vector<double> cuts;
  for (int b = 0; b <= bins; ++b)
    cuts.push_back(static_cast<double>(b) / static_cast<double>(bins));
  cuts.back() += 1e-9;
  return DiscretizationGrid{cuts};
}

}  // namespace fairkrr
