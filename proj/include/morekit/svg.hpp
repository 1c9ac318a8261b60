#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace morekit::svg {

/// 2-D scatter colored by integer category; `category_names` may be empty
/// (indices are used). `comments` land in an XML comment so outputs carry
/// the config hash.
void write_scatter(const std::string& path, const Eigen::MatrixXd& points_2d,
                   const std::vector<int>& categories,
                   const std::vector<std::string>& category_names, const std::string& title,
                   const std::vector<std::string>& comments = {});

/// Box-style summary (min, quartiles, median, max) of several per-cell
/// metrics, one panel per metric.
void write_box_summary(const std::string& path, const std::vector<std::string>& metric_names,
                       const std::vector<std::vector<double>>& metric_values,
                       const std::string& title, const std::vector<std::string>& comments = {});

}  // namespace morekit::svg
