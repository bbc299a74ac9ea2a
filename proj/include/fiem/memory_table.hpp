#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>

#include "fiem/errors.hpp"
#include "fiem/model.hpp"

namespace fiem {

// Per-example store S_{k,i} with its running mean S~^k. Column i holds S_i.
class MemoryTable {
 public:
  MemoryTable() = default;

  // rows: q x n, one column per example. refresh_period = 0 means n.
  explicit MemoryTable(Eigen::MatrixXd rows, std::size_t refresh_period = 0);

  template <FiniteSumModel M>
  static MemoryTable from_model(const M& model, const typename M::Parameter& theta, std::size_t refresh_period = 0) {
    const auto q = static_cast<Eigen::Index>(model.stat_dim());
    const auto n = static_cast<Eigen::Index>(model.size());
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(q, n);
    Eigen::VectorXd column(q);
    for (Eigen::Index i = 0; i < n; ++i) {
      column.setZero();
      model.accumulate_sbar_i(theta, static_cast<std::size_t>(i), 1.0, column);
      rows.col(i) = column;
    }
    return MemoryTable(std::move(rows), refresh_period);
  }

  bool initialized() const { return rows_.cols() > 0; }
  std::size_t size() const { return static_cast<std::size_t>(rows_.cols()); }
  std::size_t dim() const { return static_cast<std::size_t>(rows_.rows()); }

  Eigen::MatrixXd::ConstColXpr row(std::size_t i) const;
  const Eigen::MatrixXd& rows() const { return rows_; }
  const SuffStat& mean() const;

  // S_i <- value; S~ <- S~ + (value - old) / n. Every `refresh_period`
  // replacements the running mean is recomputed from the rows.
  void replace(std::size_t i, const Eigen::Ref<const Eigen::VectorXd>& value);

  // Batch average of stored rows, counting repeated indices with multiplicity.
  SuffStat batch_mean(std::span<const std::size_t> batch) const;

  void refresh();

  // max_j |S~_j - mean_j(rows)| / (1 + max_j |mean_j(rows)|)
  double coherence_error() const;

 private:
  void require_initialized(const char* where) const;

  Eigen::MatrixXd rows_;
  SuffStat mean_;
  std::size_t refresh_period_ = 0;
  std::size_t updates_since_refresh_ = 0;
};

}  // namespace fiem
