#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace zeroem {

struct GbdtParams {
  int max_depth = 3;
  int n_rounds = 100;
  double learning_rate = 0.1;
  double l2 = 1.0;
  std::size_t min_samples_leaf = 5;
  int max_bins = 64;

  nlohmann::ordered_json to_json() const;
};

/// Gradient-boosted regression trees on the logistic loss. Splits are searched
/// over per-feature histogram bins; training is fully deterministic.
class GradientBoostedTrees {
 public:
  /// `features` is samples x features; `labels` holds 0/1.
  static GradientBoostedTrees fit(const Eigen::MatrixXd& features, std::span<const int> labels, const GbdtParams& params);

  double margin(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  std::vector<double> predict_proba(const Eigen::MatrixXd& features) const;

  /// Mean log-loss on (features, labels) after each boosting round; entry 0 is the prior.
  std::vector<double> staged_log_loss(const Eigen::MatrixXd& features, std::span<const int> labels) const;

  std::size_t tree_count() const { return trees_.size(); }

 private:
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;  // x <= threshold goes left
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  using Tree = std::vector<Node>;

  static double tree_output(const Tree& tree, const Eigen::Ref<const Eigen::RowVectorXd>& row);

  double base_margin_ = 0.0;
  std::vector<Tree> trees_;
};

}  // namespace zeroem
