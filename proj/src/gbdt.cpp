#include "zeroem/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace zeroem {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Binned {
  std::vector<std::vector<double>> thresholds;  // per feature, ascending
  std::vector<std::uint16_t> bins;              // column-major n x f
  std::size_t rows = 0;

  std::uint16_t at(std::size_t row, std::size_t feature) const { return bins[feature * rows + row]; }
};

Binned bin_features(const Eigen::MatrixXd& x, int max_bins) {
  Binned b;
  b.rows = static_cast<std::size_t>(x.rows());
  const auto cols = static_cast<std::size_t>(x.cols());
  b.thresholds.resize(cols);
  b.bins.resize(b.rows * cols);
  std::vector<double> values(b.rows);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < b.rows; ++i) values[i] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    auto& t = b.thresholds[j];
    if (static_cast<int>(sorted.size()) <= max_bins) {
      for (std::size_t k = 0; k + 1 < sorted.size(); ++k) t.push_back(0.5 * (sorted[k] + sorted[k + 1]));
    } else {
      std::vector<double> all = values;
      std::sort(all.begin(), all.end());
      for (int q = 1; q < max_bins; ++q) {
        const std::size_t pos = static_cast<std::size_t>(static_cast<double>(q) * static_cast<double>(all.size()) / max_bins);
        const double edge = all[std::min(pos, all.size() - 1)];
        if (t.empty() || edge > t.back()) t.push_back(edge);
      }
      if (!t.empty() && t.back() >= sorted.back()) t.pop_back();
    }
    for (std::size_t i = 0; i < b.rows; ++i) {
      const auto it = std::lower_bound(t.begin(), t.end(), values[i]);
      b.bins[j * b.rows + i] = static_cast<std::uint16_t>(it - t.begin());
    }
  }
  return b;
}

class TreeBuilder {
 public:
  TreeBuilder(const Binned& binned, const std::vector<double>& grad, const std::vector<double>& hess,
              const GbdtParams& params)
      : binned_(binned), grad_(grad), hess_(hess), params_(params) {}

  template <typename Node>
  int build(std::vector<Node>& tree, std::vector<std::size_t>& rows, int depth) {
    double g_sum = 0.0;
    double h_sum = 0.0;
    for (std::size_t r : rows) {
      g_sum += grad_[r];
      h_sum += hess_[r];
    }
    const int index = static_cast<int>(tree.size());
    tree.push_back(Node{});
    tree[index].value = -g_sum / (h_sum + params_.l2) * params_.learning_rate;
    if (depth >= params_.max_depth || rows.size() < 2 * params_.min_samples_leaf) return index;

    const double parent = g_sum * g_sum / (h_sum + params_.l2);
    double best_gain = 1e-12;
    int best_feature = -1;
    std::size_t best_bin = 0;
    std::vector<double> hg, hh;
    std::vector<std::size_t> hc;
    for (std::size_t j = 0; j < binned_.thresholds.size(); ++j) {
      const std::size_t nb = binned_.thresholds[j].size() + 1;
      if (nb < 2) continue;
      hg.assign(nb, 0.0);
      hh.assign(nb, 0.0);
      hc.assign(nb, 0);
      for (std::size_t r : rows) {
        const auto b = binned_.at(r, j);
        hg[b] += grad_[r];
        hh[b] += hess_[r];
        ++hc[b];
      }
      double gl = 0.0, hl = 0.0;
      std::size_t cl = 0;
      for (std::size_t t = 0; t + 1 < nb; ++t) {
        gl += hg[t];
        hl += hh[t];
        cl += hc[t];
        const std::size_t cr = rows.size() - cl;
        if (cl < params_.min_samples_leaf) continue;
        if (cr < params_.min_samples_leaf) break;
        const double gr = g_sum - gl;
        const double hr = h_sum - hl;
        const double gain = gl * gl / (hl + params_.l2) + gr * gr / (hr + params_.l2) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(j);
          best_bin = t;
        }
      }
    }
    if (best_feature < 0) return index;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows)
      (binned_.at(r, static_cast<std::size_t>(best_feature)) <= best_bin ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    tree[index].feature = best_feature;
    tree[index].threshold = binned_.thresholds[static_cast<std::size_t>(best_feature)][best_bin];
    const int l = build(tree, left, depth + 1);
    const int r = build(tree, right, depth + 1);
    tree[index].left = l;
    tree[index].right = r;
    return index;
  }

 private:
  const Binned& binned_;
  const std::vector<double>& grad_;
  const std::vector<double>& hess_;
  const GbdtParams& params_;
};

}  // namespace

nlohmann::ordered_json GbdtParams::to_json() const {
  return {{"max_depth", max_depth},         {"n_rounds", n_rounds}, {"learning_rate", learning_rate},
          {"l2", l2},                       {"min_samples_leaf", min_samples_leaf},
          {"max_bins", max_bins}};
}

GradientBoostedTrees GradientBoostedTrees::fit(const Eigen::MatrixXd& features, std::span<const int> labels,
                                               const GbdtParams& params) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (n == 0 || labels.size() != n) throw std::invalid_argument("gbdt: feature rows and labels disagree");
  if (params.max_bins < 2 || params.max_bins > 65535) throw std::invalid_argument("gbdt: max_bins out of range");

  GradientBoostedTrees model;
  const double positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double prior = std::clamp(positives / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
  model.base_margin_ = std::log(prior / (1.0 - prior));

  const Binned binned = bin_features(features, params.max_bins);
  std::vector<double> margin(n, model.base_margin_), grad(n), hess(n);
  TreeBuilder builder(binned, grad, hess, params);
  for (int round = 0; round < params.n_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      grad[i] = p - labels[i];
      hess[i] = std::max(p * (1.0 - p), 1e-16);
    }
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    Tree tree;
    builder.build(tree, rows, 0);
    for (std::size_t i = 0; i < n; ++i) margin[i] += tree_output(tree, features.row(static_cast<Eigen::Index>(i)));
    model.trees_.push_back(std::move(tree));
  }
  return model;
}

double GradientBoostedTrees::tree_output(const Tree& tree, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int node = 0;
  while (tree[static_cast<std::size_t>(node)].feature >= 0) {
    const Node& n = tree[static_cast<std::size_t>(node)];
    node = row(n.feature) <= n.threshold ? n.left : n.right;
  }
  return tree[static_cast<std::size_t>(node)].value;
}

double GradientBoostedTrees::margin(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  double m = base_margin_;
  for (const auto& tree : trees_) m += tree_output(tree, row);
  return m;
}

std::vector<double> GradientBoostedTrees::predict_proba(const Eigen::MatrixXd& features) const {
  std::vector<double> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) out[static_cast<std::size_t>(i)] = sigmoid(margin(features.row(i)));
  return out;
}

std::vector<double> GradientBoostedTrees::staged_log_loss(const Eigen::MatrixXd& features,
                                                          std::span<const int> labels) const {
  const auto n = static_cast<std::size_t>(features.rows());
  std::vector<double> margin(n, base_margin_);
  std::vector<double> losses;
  losses.reserve(trees_.size() + 1);
  auto loss = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = std::clamp(sigmoid(margin[i]), 1e-15, 1.0 - 1e-15);
      total -= labels[i] ? std::log(p) : std::log(1.0 - p);
    }
    return total / static_cast<double>(n);
  };
  losses.push_back(loss());
  for (const auto& tree : trees_) {
    for (std::size_t i = 0; i < n; ++i) margin[i] += tree_output(tree, features.row(static_cast<Eigen::Index>(i)));
    losses.push_back(loss());
  }
  return losses;
}

}  // namespace zeroem
