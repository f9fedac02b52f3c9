#include "rulehte/rulegen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "rulehte/error.hpp"

namespace rulehte {

std::string to_string(Learner l) {
    return l == Learner::gbm ? "gbm" : "ctree";
}

Learner learner_from_string(const std::string& s) {
    if (s == "gbm") return Learner::gbm;
    if (s == "ctree") return Learner::ctree;
    throw ConfigError("unknown learner '" + s + "' (expected gbm or ctree)");
}

int Tree::n_leaves() const {
    return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int Tree::n_internal() const {
    return static_cast<int>(nodes.size()) - n_leaves();
}

int Tree::leaf_of(const Eigen::MatrixXd& x, Eigen::Index row) const {
    int k = 0;
    while (!nodes[k].is_leaf()) {
        const auto& nd = nodes[k];
        k = x(row, nd.var) < nd.threshold ? nd.left : nd.right;
    }
    return k;
}

const Eigen::VectorXd& Tree::predict(const Eigen::MatrixXd& x, Eigen::Index row) const {
    return nodes[leaf_of(x, row)].value;
}

void BoostConfig::validate() const {
    if (n_trees < 1) throw ConfigError("number of trees must be >= 1");
    if (!(mean_size >= 2.0)) throw ConfigError("mean tree size must be >= 2");
    if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw ConfigError("shrinkage must lie in [0, 1]");
    if (min_node_size < 1) throw ConfigError("min_node_size must be >= 1");
    if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0)) {
        throw ConfigError("subsample_fraction must lie in (0, 1]");
    }
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("ctree alpha must lie in (0, 1]");
}

int sample_tree_size(double mean_size, Rng& rng) {
    if (!(mean_size >= 2.0)) throw ConfigError("mean tree size must be >= 2");
    if (mean_size <= 2.0 + 1e-12) return 2;
    std::exponential_distribution<double> expo(1.0 / (mean_size - 2.0));
    double omega = std::min(expo(rng), 1e6);
    return 2 + static_cast<int>(std::floor(omega));
}

namespace {

struct SplitCandidate {
    bool valid = false;
    int var = -1;
    double threshold = 0.0;
    double gain = 0.0;
    double p_value = 1.0;  // ctree only
};

class TreeGrower {
public:
    TreeGrower(const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets, const TreeOptions& opts)
        : x_(x), targets_(targets), opts_(opts), T_(static_cast<int>(targets.cols())) {}

    Tree grow(std::span<const int> rows) {
        Tree tree;
        std::vector<int> root_rows(rows.begin(), rows.end());
        compute_weights(root_rows);
        tree.nodes.push_back(make_node(root_rows, -1));
        members_.push_back(std::move(root_rows));
        candidates_.push_back(best_split(members_[0]));

        int leaves = 1;
        while (leaves < opts_.max_leaves) {
            int pick = -1;
            for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
                if (!tree.nodes[k].is_leaf() || !candidates_[k].valid) continue;
                if (pick < 0 || better(candidates_[k], candidates_[pick])) pick = static_cast<int>(k);
            }
            if (pick < 0) break;
            const auto cand = candidates_[pick];
            std::vector<int> left_rows, right_rows;
            for (int i : members_[pick]) {
                (x_(i, cand.var) < cand.threshold ? left_rows : right_rows).push_back(i);
            }
            const int li = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back(make_node(left_rows, pick));
            tree.nodes.push_back(make_node(right_rows, pick));
            tree.nodes[pick].var = cand.var;
            tree.nodes[pick].threshold = cand.threshold;
            tree.nodes[pick].left = li;
            tree.nodes[pick].right = li + 1;
            candidates_.push_back(best_split(left_rows));
            candidates_.push_back(best_split(right_rows));
            members_.push_back(std::move(left_rows));
            members_.push_back(std::move(right_rows));
            candidates_[pick].valid = false;
            ++leaves;
        }
        return tree;
    }

private:
    // Order leaves for expansion: gbm by gain, ctree by adjusted p-value and
    // then gain.
    bool better(const SplitCandidate& a, const SplitCandidate& b) const {
        if (opts_.learner == Learner::ctree && a.p_value != b.p_value) return a.p_value < b.p_value;
        return a.gain > b.gain;
    }

    void compute_weights(const std::vector<int>& rows) {
        weights_ = Eigen::VectorXd::Zero(T_);
        total_scale_ = 0.0;
        const double m = static_cast<double>(rows.size());
        if (rows.size() < 2) return;
        for (int t = 0; t < T_; ++t) {
            double mean = 0.0;
            for (int i : rows) mean += targets_(i, t);
            mean /= m;
            double ss = 0.0;
            for (int i : rows) ss += (targets_(i, t) - mean) * (targets_(i, t) - mean);
            double var = ss / (m - 1.0);
            if (var > 1e-300) {
                weights_[t] = 1.0 / var;
                total_scale_ += ss / var;
            }
        }
    }

    TreeNode make_node(const std::vector<int>& rows, int parent) const {
        TreeNode node;
        node.parent = parent;
        node.rows = static_cast<int>(rows.size());
        node.value = Eigen::VectorXd::Zero(T_);
        for (int i : rows) node.value += targets_.row(i).transpose();
        if (!rows.empty()) node.value /= static_cast<double>(rows.size());
        return node;
    }

    // Best cut on covariate j by weighted variance reduction.
    SplitCandidate best_cut(const std::vector<int>& rows, int j) const {
        SplitCandidate best;
        const int m = static_cast<int>(rows.size());
        const int min_size = std::max(1, opts_.min_node_size);
        if (m < 2 * min_size) return best;
        std::vector<int> order(rows);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            double xa = x_(a, j), xb = x_(b, j);
            return xa < xb || (xa == xb && a < b);
        });
        Eigen::VectorXd total = Eigen::VectorXd::Zero(T_);
        for (int i : order) total += targets_.row(i).transpose();
        Eigen::VectorXd base = total.array().square() / static_cast<double>(m);
        const double base_gain = weights_.dot(base);
        Eigen::VectorXd left = Eigen::VectorXd::Zero(T_);
        const double tiny = 1e-12 * std::max(1.0, total_scale_);
        for (int k = 1; k < m; ++k) {
            left += targets_.row(order[k - 1]).transpose();
            const double xa = x_(order[k - 1], j);
            const double xb = x_(order[k], j);
            if (!(xa < xb)) continue;
            if (k < min_size || m - k < min_size) continue;
            Eigen::VectorXd right = total - left;
            double gain = 0.0;
            for (int t = 0; t < T_; ++t) {
                gain += weights_[t] * (left[t] * left[t] / k + right[t] * right[t] / (m - k));
            }
            gain -= base_gain;
            if (gain > tiny && gain > best.gain) {
                double mid = 0.5 * (xa + xb);
                if (!(mid > xa)) mid = xb;
                best.valid = true;
                best.var = j;
                best.threshold = mid;
                best.gain = gain;
            }
        }
        return best;
    }

    SplitCandidate best_split(const std::vector<int>& rows) const {
        if (opts_.learner == Learner::gbm) {
            SplitCandidate best;
            for (int j = 0; j < x_.cols(); ++j) {
                auto c = best_cut(rows, j);
                if (c.valid && (!best.valid || c.gain > best.gain)) best = c;
            }
            return best;
        }
        return ctree_split(rows);
    }

    // Max-type association test between each covariate and the targets.
    // The standardized linear statistic of a permutation test of one
    // covariate against one target is r * sqrt(m - 1).
    SplitCandidate ctree_split(const std::vector<int>& rows) const {
        SplitCandidate none;
        const int m = static_cast<int>(rows.size());
        const int p = static_cast<int>(x_.cols());
        if (m < std::max(3, 2 * opts_.min_node_size)) return none;
        Eigen::VectorXd tmean = Eigen::VectorXd::Zero(T_);
        for (int i : rows) tmean += targets_.row(i).transpose();
        tmean /= m;
        Eigen::VectorXd tss = Eigen::VectorXd::Zero(T_);
        for (int i : rows) tss += (targets_.row(i).transpose() - tmean).array().square().matrix();

        int best_var = -1;
        double best_stat = 0.0;
        for (int j = 0; j < p; ++j) {
            double xm = 0.0;
            for (int i : rows) xm += x_(i, j);
            xm /= m;
            double xss = 0.0;
            Eigen::VectorXd cross = Eigen::VectorXd::Zero(T_);
            for (int i : rows) {
                double dx = x_(i, j) - xm;
                xss += dx * dx;
                cross += dx * (targets_.row(i).transpose() - tmean);
            }
            if (!(xss > 1e-300)) continue;
            double stat = 0.0;
            for (int t = 0; t < T_; ++t) {
                if (!(tss[t] > 1e-300)) continue;
                double r = cross[t] / std::sqrt(xss * tss[t]);
                stat = std::max(stat, std::abs(r) * std::sqrt(static_cast<double>(m - 1)));
            }
            if (stat > best_stat) {
                best_stat = stat;
                best_var = j;
            }
        }
        if (best_var < 0) return none;
        const double p_raw = std::erfc(best_stat / std::sqrt(2.0));
        const double p_adj = std::min(1.0, p_raw * static_cast<double>(T_) * static_cast<double>(p));
        if (p_adj > opts_.alpha) return none;
        auto cut = best_cut(rows, best_var);
        if (!cut.valid) return none;
        cut.p_value = p_adj;
        return cut;
    }

    const Eigen::MatrixXd& x_;
    const Eigen::MatrixXd& targets_;
    TreeOptions opts_;
    int T_;
    Eigen::VectorXd weights_;
    double total_scale_ = 0.0;
    std::vector<std::vector<int>> members_;
    std::vector<SplitCandidate> candidates_;
};

}  // namespace

Tree fit_tree(const Eigen::MatrixXd& x, std::span<const int> rows, const Eigen::MatrixXd& residuals,
              const TreeOptions& opts) {
    if (residuals.rows() != x.rows()) throw DimensionError("fit_tree: residuals and covariates differ in rows");
    if (opts.max_leaves < 1) throw ConfigError("fit_tree: tree size must be >= 1");
    if (rows.empty()) throw DataError("fit_tree: empty row set");
    TreeGrower grower(x, residuals, opts);
    return grower.grow(rows);
}

BoostResult boost(const TransformedOutcomes& z, const Dataset& data, const BoostConfig& cfg) {
    cfg.validate();
    if (z.n() != data.n()) throw DimensionError("boost: transformed outcomes and data differ in rows");
    const int n = data.n();
    BoostResult out;
    out.initial = z.z.colwise().mean().transpose();
    Eigen::MatrixXd resid = z.z.rowwise() - out.initial.transpose();

    Rng rng(cfg.seed);
    const int sub_n = std::clamp(static_cast<int>(std::lround(cfg.subsample_fraction * n)), 1, n);
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    std::vector<int> sample(sub_n);

    TreeOptions topt;
    topt.learner = cfg.learner;
    topt.min_node_size = cfg.min_node_size;
    topt.alpha = cfg.alpha;
    out.trees.reserve(cfg.n_trees);
    for (int m = 0; m < cfg.n_trees; ++m) {
        topt.max_leaves = sample_tree_size(cfg.mean_size, rng);
        if (sub_n == n) {
            sample = all;
        } else {
            std::sample(all.begin(), all.end(), sample.begin(), sub_n, rng);
        }
        Tree tree = fit_tree(data.x(), sample, resid, topt);
        if (cfg.shrinkage > 0.0 && tree.nodes.size() > 1) {
            for (int i = 0; i < n; ++i) {
                resid.row(i) -= cfg.shrinkage * tree.predict(data.x(), i).transpose();
            }
        } else if (cfg.shrinkage > 0.0) {
            resid.rowwise() -= cfg.shrinkage * tree.nodes[0].value.transpose();
        }
        out.loss_trace.push_back(resid.squaredNorm());
        out.trees.push_back(std::move(tree));
    }
    return out;
}

std::vector<RuleTerm> extract_rules(const Tree& tree) {
    const std::size_t count = tree.nodes.size();
    std::vector<RuleTerm> path(count);
    std::vector<RuleTerm> out;
    if (count <= 1) return out;
    out.reserve(count - 1);
    for (std::size_t k = 1; k < count; ++k) {
        const auto& node = tree.nodes[k];
        const auto& parent = tree.nodes[node.parent];
        RuleTerm rule = path[node.parent];
        const bool is_left = parent.left == static_cast<int>(k);
        Condition c{parent.var, is_left ? -kInf : parent.threshold, is_left ? parent.threshold : kInf};
        rule.restrict(c);
        path[k] = rule;
        out.push_back(std::move(rule));
    }
    return out;
}

std::vector<RuleTerm> dedupe_rules(std::span<const RuleTerm> rules, const Dataset& data) {
    std::set<RuleTerm> seen;
    std::vector<RuleTerm> out;
    for (const auto& r : rules) {
        if (!seen.insert(r).second) continue;
        double s = rule_support(r, data);
        if (s <= 0.0 || s >= 1.0) continue;
        out.push_back(r);
    }
    return out;
}

nlohmann::json tree_to_json(const Tree& tree) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& nd : tree.nodes) {
        nlohmann::json j{{"rows", nd.rows},
                         {"value", std::vector<double>(nd.value.data(), nd.value.data() + nd.value.size())}};
        if (!nd.is_leaf()) {
            j["var"] = nd.var;
            j["threshold"] = nd.threshold;
            j["left"] = nd.left;
            j["right"] = nd.right;
        }
        nodes.push_back(std::move(j));
    }
    return nlohmann::json{{"nodes", nodes}};
}

}  // namespace rulehte
