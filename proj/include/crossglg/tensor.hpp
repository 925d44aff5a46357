#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace crossglg {

// Feature maps are stored row-major with one row per (frame, joint) pair,
// row index t * V + v.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

using Rng = std::mt19937_64;

/// Ordered collection of named parameter tensors.
///
/// Gradients and optimizer state use a ParamSet with the same layout, created
/// through zeros_like(), so that index handles are shared between them.
class ParamSet {
 public:
  std::size_t add(std::string name, Mat value);

  std::size_t index(std::string_view name) const;
  bool contains(std::string_view name) const;

  Mat& operator[](std::size_t i) { return values_[i]; }
  const Mat& operator[](std::size_t i) const { return values_[i]; }

  const std::string& name(std::size_t i) const { return names_[i]; }
  std::size_t size() const { return values_.size(); }
  std::size_t total_elements() const;

  ParamSet zeros_like() const;
  void set_zero();
  void add_scaled(const ParamSet& other, double scale);

  // Rounds every entry to the nearest 32-bit float so the set survives
  // float32 serialization bit-exactly.
  void round_to_float();

  double max_abs_difference(const ParamSet& other) const;
  bool all_finite() const;

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline double round_to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

// Row-wise softmax with max subtraction.
void softmax_rows_inplace(Mat& m);
Vec softmax(const Vec& scores);

}  // namespace crossglg
