#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace robloc {

struct Truth {
  Eigen::VectorXd location;
  std::vector<bool> corrupted;
  std::string generator;

  std::size_t corrupted_count() const;
};

/// n x d sample matrix, one sample per row.
struct Dataset {
  Eigen::MatrixXd samples;
  std::optional<Truth> truth;

  Eigen::Index n() const { return samples.rows(); }
  Eigen::Index d() const { return samples.cols(); }
};

/// Text format: "n d has_truth", n rows of d numbers, then (if has_truth)
/// a line with the location and a line of n 0/1 flags.
void write_dataset(std::ostream& os, const Dataset& data);
Dataset read_dataset(std::istream& is);
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

}  // namespace robloc
