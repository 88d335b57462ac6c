#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cocrt/matstat/linalg.hpp"

namespace cocrt {

struct ClusterInfo {
  long id = 0;
  int arm = 0;  // 1 = treatment
  int size = 0;
};

/// Per-subject trial records.  Row r of `y` holds the K endpoints of a
/// subject in cluster `clusters[subject_cluster[r]]`.
struct TrialDataset {
  std::vector<ClusterInfo> clusters;
  std::vector<int> subject_cluster;
  Matrix y;  // N x K

  int k() const { return static_cast<int>(y.cols()); }
  int n_clusters() const { return static_cast<int>(clusters.size()); }
  int n_subjects() const { return static_cast<int>(y.rows()); }

  /// Throws Error(InvalidArgument) if sizes, arms or indices disagree.
  void validate() const;
};

/// Reads the trial CSV format: header `cluster_id,arm,y1,...,yK`, one row per
/// subject.  K is taken from the header.  Rows of one cluster need not be
/// contiguous but must agree on the arm.  Throws Error(InvalidArgument) with a
/// line number on malformed input.
TrialDataset read_trial_csv(std::istream& in);
TrialDataset read_trial_csv_file(const std::string& path);

void write_trial_csv(std::ostream& out, const TrialDataset& data);

}  // namespace cocrt
