#include "loid/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "loid/error.hpp"

namespace loid {

double auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  if (scores.size() != labels.size()) throw DataError("auc: scores and labels differ in length");
  if (!scores.allFinite()) throw NumericalError("auc: non-finite score");
  const auto n = static_cast<std::size_t>(scores.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] < scores[static_cast<Eigen::Index>(b)];
  });

  long long n_pos = 0;
  long long doubled_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[static_cast<Eigen::Index>(order[j + 1])] == scores[static_cast<Eigen::Index>(order[i])]) ++j;
    // Tied block occupies 1-based ranks i+1..j+1; twice their mean is i+j+2.
    const auto doubled = static_cast<long long>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[static_cast<Eigen::Index>(order[k])] > 0.5) {
        ++n_pos;
        doubled_rank_sum += doubled;
      }
    }
    i = j + 1;
  }
  const long long n_neg = static_cast<long long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("auc: labels contain a single class");
  const long long doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(n_pos * n_neg));
}

std::optional<double> gap_closed(double auc_method, double auc_ood, double auc_cap) {
  const double gap = auc_cap - auc_ood;
  if (gap == 0.0 || !std::isfinite(gap)) return std::nullopt;
  // Ratio first, so method == cap gives exactly 100.
  return 100.0 * ((auc_method - auc_ood) / gap);
}

}  // namespace loid
