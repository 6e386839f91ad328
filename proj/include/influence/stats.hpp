#pragma once

#include <span>
#include <vector>

namespace influence {

/// Sample Pearson correlation. Throws DataError for length mismatch, fewer
/// than two points, or a constant input.
double pearson_r(std::span<const double> xs, std::span<const double> ys);

/// Pearson correlation of the average ranks (ties share their mean rank).
double spearman_r(std::span<const double> xs, std::span<const double> ys);

/// 1-based average ranks.
std::vector<double> average_ranks(std::span<const double> values);

}  // namespace influence
