#include "fiem/memory_table.hpp"

#include <string>

namespace fiem {

MemoryTable::MemoryTable(Eigen::MatrixXd rows, std::size_t refresh_period)
    : rows_(std::move(rows)), refresh_period_(refresh_period) {
  if (rows_.cols() == 0 || rows_.rows() == 0) throw ArgumentError("MemoryTable: empty table");
  if (refresh_period_ == 0) refresh_period_ = static_cast<std::size_t>(rows_.cols());
  refresh();
}

void MemoryTable::require_initialized(const char* where) const {
  if (!initialized()) throw StateError(std::string(where) + ": memory table is not initialized");
}

Eigen::MatrixXd::ConstColXpr MemoryTable::row(std::size_t i) const {
  require_initialized("MemoryTable::row");
  if (i >= size()) throw ArgumentError("MemoryTable::row: index out of range");
  return rows_.col(static_cast<Eigen::Index>(i));
}

const SuffStat& MemoryTable::mean() const {
  require_initialized("MemoryTable::mean");
  return mean_;
}

void MemoryTable::replace(std::size_t i, const Eigen::Ref<const Eigen::VectorXd>& value) {
  require_initialized("MemoryTable::replace");
  if (i >= size()) throw ArgumentError("MemoryTable::replace: index out of range");
  if (value.size() != rows_.rows()) throw ConfigurationError("MemoryTable::replace: dimension mismatch");
  auto column = rows_.col(static_cast<Eigen::Index>(i));
  mean_ += (value - column) / static_cast<double>(size());
  column = value;
  if (++updates_since_refresh_ >= refresh_period_) refresh();
}

SuffStat MemoryTable::batch_mean(std::span<const std::size_t> batch) const {
  require_initialized("MemoryTable::batch_mean");
  if (batch.empty()) throw ArgumentError("MemoryTable::batch_mean: empty batch");
  const double weight = 1.0 / static_cast<double>(batch.size());
  SuffStat out = SuffStat::Zero(rows_.rows());
  for (std::size_t j : batch) out += weight * row(j);
  return out;
}

void MemoryTable::refresh() {
  mean_ = rows_.rowwise().sum() / static_cast<double>(rows_.cols());
  updates_since_refresh_ = 0;
}

double MemoryTable::coherence_error() const {
  require_initialized("MemoryTable::coherence_error");
  const SuffStat exact = rows_.rowwise().sum() / static_cast<double>(rows_.cols());
  return (mean_ - exact).cwiseAbs().maxCoeff() / (1.0 + exact.cwiseAbs().maxCoeff());
}

}  // namespace fiem
