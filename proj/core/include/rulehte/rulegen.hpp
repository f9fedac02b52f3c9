#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "rulehte/dataset.hpp"
#include "rulehte/outcome_transform.hpp"
#include "rulehte/rng.hpp"
#include "rulehte/rule.hpp"

namespace rulehte {

/// Base tree learner used during boosting.
///  - gbm:   CART-style, split maximizing the summed per-target variance
///           reduction with targets standardized by their residual SD.
///  - ctree: the covariate is chosen by a max-type correlation test with
///           Bonferroni adjustment (an asymptotic stand-in for conditional
///           inference trees); the cut point then maximizes the gbm gain.
enum class Learner { gbm, ctree };

std::string to_string(Learner l);
Learner learner_from_string(const std::string& s);

/// One node of a binary regression tree. Rows with x[var] < threshold go
/// left. Every node carries the per-target mean of its training residuals.
struct TreeNode {
    int var = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int parent = -1;
    int rows = 0;
    Eigen::VectorXd value;

    bool is_leaf() const noexcept { return left < 0; }
};

/// Flat tree; node 0 is the root and children always follow their parent.
struct Tree {
    std::vector<TreeNode> nodes;

    int n_leaves() const;
    int n_internal() const;
    /// Index of the leaf reached by row `row` of x.
    int leaf_of(const Eigen::MatrixXd& x, Eigen::Index row) const;
    /// Leaf value for row `row` of x.
    const Eigen::VectorXd& predict(const Eigen::MatrixXd& x, Eigen::Index row) const;
};

struct TreeOptions {
    int max_leaves = 2;
    Learner learner = Learner::gbm;
    int min_node_size = 10;
    double alpha = 0.05;  ///< ctree significance level
};

struct BoostConfig {
    int n_trees = 333;
    double mean_size = 2.0;  ///< mean number of terminal nodes per tree
    double shrinkage = 0.01;
    Learner learner = Learner::gbm;
    int min_node_size = 10;
    double subsample_fraction = 0.5;
    double alpha = 0.05;
    std::uint64_t seed = 1;

    void validate() const;
};

struct BoostResult {
    std::vector<Tree> trees;
    Eigen::VectorXd initial;         ///< column means of the targets
    std::vector<double> loss_trace;  ///< sum of squared residuals after each tree
};

/// Terminal-node count 2 + floor(omega), omega ~ exponential with mean
/// (mean_size - 2). Returns 2 when mean_size == 2.
int sample_tree_size(double mean_size, Rng& rng);

/// Greedy best-first growth on `rows` of x against residual targets (one row
/// of `residuals` per row of x) up to `opts.max_leaves` leaves. Stops early
/// when no admissible split remains.
Tree fit_tree(const Eigen::MatrixXd& x, std::span<const int> rows, const Eigen::MatrixXd& residuals,
              const TreeOptions& opts);

/// Least-squares gradient boosting of the multi-target transformed outcomes.
BoostResult boost(const TransformedOutcomes& z, const Dataset& data, const BoostConfig& cfg);

/// One rule per non-root node, in node order, with same-variable conditions
/// along the root path merged.
std::vector<RuleTerm> extract_rules(const Tree& tree);

/// Drops exact duplicates (keeping the first) and rules with training
/// support 0 or 1; otherwise order-preserving.
std::vector<RuleTerm> dedupe_rules(std::span<const RuleTerm> rules, const Dataset& data);

nlohmann::json tree_to_json(const Tree& tree);

}  // namespace rulehte
