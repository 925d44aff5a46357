#include "crossglg/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace crossglg {

std::size_t ParamSet::add(std::string name, Mat value) {
  if (index_.count(name) != 0) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  const std::size_t i = values_.size();
  index_.emplace(name, i);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return i;
}

std::size_t ParamSet::index(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw std::out_of_range("unknown parameter: " + std::string(name));
  }
  return it->second;
}

bool ParamSet::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

std::size_t ParamSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    out.add(names_[i], Mat::Zero(values_[i].rows(), values_[i].cols()));
  }
  return out;
}

void ParamSet::set_zero() {
  for (auto& v : values_) v.setZero();
}

void ParamSet::add_scaled(const ParamSet& other, double scale) {
  if (other.size() != size()) throw std::invalid_argument("ParamSet layout mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
}

void ParamSet::round_to_float() {
  for (auto& v : values_) {
    v = v.unaryExpr([](double x) { return crossglg::round_to_float(x); });
  }
}

double ParamSet::max_abs_difference(const ParamSet& other) const {
  if (other.size() != size()) throw std::invalid_argument("ParamSet layout mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i].rows() != other.values_[i].rows() || values_[i].cols() != other.values_[i].cols()) {
      throw std::invalid_argument("shape mismatch for " + names_[i]);
    }
    if (values_[i].size() == 0) continue;
    worst = std::max(worst, (values_[i] - other.values_[i]).cwiseAbs().maxCoeff());
  }
  return worst;
}

bool ParamSet::all_finite() const {
  for (const auto& v : values_) {
    if (!v.allFinite()) return false;
  }
  return true;
}

void softmax_rows_inplace(Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

Vec softmax(const Vec& scores) {
  const double mx = scores.maxCoeff();
  Vec e = (scores.array() - mx).exp();
  return e / e.sum();
}

}  // namespace crossglg
