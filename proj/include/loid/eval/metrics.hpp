#pragma once

#include <optional>

#include <Eigen/Dense>

namespace loid {

// Mann-Whitney AUC: concordant (positive, negative) pairs over all pairs,
// ties worth one half. Computed from doubled integer ranks, so the result
// equals exact pair counting.
double auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels);

// Percent of the (ood -> cap) AUC gap recovered by `method`; empty when
// cap == ood.
std::optional<double> gap_closed(double auc_method, double auc_ood, double auc_cap);

}  // namespace loid
