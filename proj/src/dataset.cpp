#include "cocrt/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "cocrt/error.hpp"

namespace cocrt {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::InvalidArgument, "trial CSV line " + std::to_string(line) + ": " + what);
}

long parse_long(const std::string& s, std::size_t line, const char* field) {
  long v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) fail(line, std::string("bad ") + field + " '" + s + "'");
  return v;
}

double parse_double(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    fail(line, "bad endpoint value '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) fail(line, "bad endpoint value '" + s + "'");
  return v;
}

}  // namespace

void TrialDataset::validate() const {
  require(y.cols() >= 1 && y.cols() <= kMaxEndpoints, "dataset must have 1..16 endpoints");
  require(static_cast<Eigen::Index>(subject_cluster.size()) == y.rows(),
          "dataset: one cluster index per subject required");
  require(y.allFinite(), "dataset: endpoint values must be finite");
  std::vector<int> counts(clusters.size(), 0);
  for (int c : subject_cluster) {
    require(c >= 0 && c < static_cast<int>(clusters.size()),
            "dataset: subject refers to an unknown cluster");
    ++counts[c];
  }
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    require(clusters[i].arm == 0 || clusters[i].arm == 1, "dataset: arm must be 0 or 1");
    require(clusters[i].size == counts[i], "dataset: cluster size does not match its rows");
    require(counts[i] >= 1, "dataset: empty cluster");
  }
}

TrialDataset read_trial_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") != std::string::npos) break;
  }
  if (lineno == 0 || line.find_first_not_of(" \t\r") == std::string::npos) {
    fail(lineno, "missing header");
  }
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "cluster_id" || header[1] != "arm") {
    fail(lineno, "header must start with cluster_id,arm followed by y1..yK");
  }
  const int k = static_cast<int>(header.size()) - 2;
  if (k > kMaxEndpoints) fail(lineno, "more than 16 endpoints");
  for (int j = 0; j < k; ++j) {
    if (header[2 + j] != "y" + std::to_string(j + 1)) {
      fail(lineno, "expected column y" + std::to_string(j + 1) + ", found '" + header[2 + j] + "'");
    }
  }

  TrialDataset data;
  std::unordered_map<long, int> index;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    if (static_cast<int>(f.size()) != k + 2) {
      fail(lineno, "expected " + std::to_string(k + 2) + " fields, found " +
                       std::to_string(f.size()));
    }
    const long id = parse_long(f[0], lineno, "cluster_id");
    const long arm = parse_long(f[1], lineno, "arm");
    if (arm != 0 && arm != 1) fail(lineno, "arm must be 0 or 1");
    auto [it, inserted] = index.try_emplace(id, static_cast<int>(data.clusters.size()));
    if (inserted) {
      data.clusters.push_back({id, static_cast<int>(arm), 0});
    } else if (data.clusters[it->second].arm != arm) {
      fail(lineno, "cluster " + std::to_string(id) + " appears in both arms");
    }
    ++data.clusters[it->second].size;
    data.subject_cluster.push_back(it->second);
    for (int j = 0; j < k; ++j) values.push_back(parse_double(f[2 + j], lineno));
  }
  if (data.subject_cluster.empty()) fail(lineno, "no data rows");
  data.y = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Eigen::Index>(data.subject_cluster.size()), k);
  data.validate();
  return data;
}

TrialDataset read_trial_csv_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open '" + path + "'");
  return read_trial_csv(in);
}

void write_trial_csv(std::ostream& out, const TrialDataset& data) {
  out << "cluster_id,arm";
  for (int j = 0; j < data.k(); ++j) out << ",y" << (j + 1);
  out << '\n';
  const auto old_prec = out.precision(std::numeric_limits<double>::max_digits10);
  for (int r = 0; r < data.n_subjects(); ++r) {
    const auto& c = data.clusters[data.subject_cluster[r]];
    out << c.id << ',' << c.arm;
    for (int j = 0; j < data.k(); ++j) out << ',' << data.y(r, j);
    out << '\n';
  }
  out.precision(old_prec);
}

}  // namespace cocrt
