#pragma once

// Classification tree explaining membership in an overlap region: greedy Gini
// splits at midpoints between distinct sorted values, weakest-link
// cost-complexity pruning, and a plain-text outline.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <functional>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "overlap/error.hpp"
#include "overlap/gp.hpp"
#include "overlap/mercer_io.hpp"
#include "overlap/propensity.hpp"
#include "overlap/svm.hpp"

namespace overlap {

struct OverlapLabels {
  std::vector<bool> ystar;

  std::size_t size() const noexcept { return ystar.size(); }
  std::size_t positives() const {
    std::size_t c = 0;
    for (bool v : ystar) c += v;
    return c;
  }
};

inline OverlapLabels overlap_labels(const std::vector<bool>& member) { return {member}; }
inline OverlapLabels overlap_labels(const TrimmingRegion& region) { return {region.member}; }
inline OverlapLabels overlap_labels(const MarginSet& margin, std::size_t n) { return {margin.flags(n)}; }

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;     // rows with z[feature] <= threshold
  int right = -1;
  std::size_t count_out = 0;  // label false
  std::size_t count_in = 0;   // label true

  bool is_leaf() const noexcept { return feature < 0; }
  std::size_t n() const noexcept { return count_out + count_in; }
  bool label() const noexcept { return count_in > count_out; }
  std::size_t errors() const noexcept { return std::min(count_out, count_in); }
};

struct Tree {
  std::vector<TreeNode> nodes;  // preorder: node, left subtree, right subtree
  int root = 0;

  std::size_t leaves() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }
  std::size_t internal_nodes() const { return nodes.size() - leaves(); }
};

struct TreeOptions {
  std::size_t min_leaf = 1;
  std::size_t max_depth = 30;
};

namespace detail {

// n * Gini impurity = 2 * a * b / n
inline double weighted_gini(std::size_t a, std::size_t b) {
  const std::size_t n = a + b;
  return n == 0 ? 0.0 : 2.0 * static_cast<double>(a) * static_cast<double>(b) / static_cast<double>(n);
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double score = std::numeric_limits<double>::infinity();
};

// Exhaustive search; ties go to the lowest feature, then lowest threshold.
inline SplitChoice best_split(const Matrix& z, const std::vector<bool>& y, const std::vector<std::size_t>& rows,
                              std::size_t min_leaf) {
  SplitChoice best;
  std::size_t total_in = 0;
  for (auto r : rows) total_in += y[r];
  const std::size_t total = rows.size();
  std::vector<std::size_t> order(rows);
  for (Eigen::Index f = 0; f < z.cols(); ++f) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return z(static_cast<Eigen::Index>(a), f) < z(static_cast<Eigen::Index>(b), f);
    });
    std::size_t left_in = 0;
    for (std::size_t k = 0; k + 1 < total; ++k) {
      left_in += y[order[k]];
      const double here = z(static_cast<Eigen::Index>(order[k]), f);
      const double next = z(static_cast<Eigen::Index>(order[k + 1]), f);
      if (!(here < next)) continue;
      const std::size_t n_left = k + 1, n_right = total - n_left;
      if (n_left < min_leaf || n_right < min_leaf) continue;
      const std::size_t right_in = total_in - left_in;
      const double score = weighted_gini(left_in, n_left - left_in) + weighted_gini(right_in, n_right - right_in);
      if (best.feature < 0 || score < best.score - 1e-12 * std::max(1.0, best.score)) {
        best = {static_cast<int>(f), 0.5 * (here + next), score};
      }
    }
  }
  return best;
}

inline int grow(Tree& tree, const Matrix& z, const std::vector<bool>& y, const std::vector<std::size_t>& rows,
                std::size_t depth, const TreeOptions& o) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  for (auto r : rows) (y[r] ? tree.nodes[id].count_in : tree.nodes[id].count_out)++;
  const TreeNode here = tree.nodes[id];
  if (here.count_in == 0 || here.count_out == 0 || depth >= o.max_depth || rows.size() < 2 * o.min_leaf) return id;
  const SplitChoice split = best_split(z, y, rows, o.min_leaf);
  if (split.feature < 0) return id;

  std::vector<std::size_t> left, right;
  for (auto r : rows) (z(static_cast<Eigen::Index>(r), split.feature) <= split.threshold ? left : right).push_back(r);
  tree.nodes[id].feature = split.feature;
  tree.nodes[id].threshold = split.threshold;
  const int l = grow(tree, z, y, left, depth + 1, o);
  tree.nodes[id].left = l;
  const int r = grow(tree, z, y, right, depth + 1, o);
  tree.nodes[id].right = r;
  return id;
}

}  // namespace detail

inline Tree fit_tree(const Matrix& z, const OverlapLabels& labels, TreeOptions options = {}) {
  require(z.rows() == static_cast<Eigen::Index>(labels.size()), ErrorKind::schema_mismatch,
          "label count differs from covariate rows");
  require(options.min_leaf >= 1, ErrorKind::invalid_config, "min_leaf must be at least 1");
  require(z.allFinite(), ErrorKind::invalid_config, "covariates must be finite");
  const std::size_t in = labels.positives();
  require(in > 0 && in < labels.size(), ErrorKind::single_class, "overlap labels contain a single class");
  std::vector<std::size_t> rows(labels.size());
  std::iota(rows.begin(), rows.end(), 0);
  Tree tree;
  detail::grow(tree, z, labels.ystar, rows, 0, options);
  return tree;
}

template <typename Row>
bool predict_tree(const Tree& tree, const Eigen::MatrixBase<Row>& z) {
  require(!tree.nodes.empty(), ErrorKind::invalid_config, "empty tree");
  int at = tree.root;
  while (!tree.nodes[static_cast<std::size_t>(at)].is_leaf()) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(at)];
    if (node.feature >= z.size())
      fail(ErrorKind::schema_mismatch, "covariate index " + std::to_string(node.feature) + " out of range");
    at = z(node.feature) <= node.threshold ? node.left : node.right;
  }
  return tree.nodes[static_cast<std::size_t>(at)].label();
}

inline std::size_t training_errors(const Tree& tree, const Matrix& z, const OverlapLabels& labels) {
  std::size_t errors = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    errors += predict_tree(tree, z.row(i).transpose()) != labels.ystar[static_cast<std::size_t>(i)];
  return errors;
}

namespace detail {

struct SubtreeStats {
  std::size_t errors = 0;
  std::size_t leaves = 0;
};

inline SubtreeStats subtree_stats(const Tree& t, int id) {
  const TreeNode& n = t.nodes[static_cast<std::size_t>(id)];
  if (n.is_leaf()) return {n.errors(), 1};
  const SubtreeStats l = subtree_stats(t, n.left), r = subtree_stats(t, n.right);
  return {l.errors + r.errors, l.leaves + r.leaves};
}

inline void copy_reachable(const Tree& from, int id, Tree& to) {
  const TreeNode src = from.nodes[static_cast<std::size_t>(id)];
  const auto at = to.nodes.size();
  to.nodes.push_back(src);
  if (src.is_leaf()) {
    to.nodes[at].left = to.nodes[at].right = -1;
    return;
  }
  to.nodes[at].left = static_cast<int>(to.nodes.size());
  copy_reachable(from, src.left, to);
  to.nodes[at].right = static_cast<int>(to.nodes.size());
  copy_reachable(from, src.right, to);
}

}  // namespace detail

// Weakest-link pruning. The link strength of an internal node t is
//   g(t) = (R(t) - R(T_t)) / ((|leaves(T_t)| - 1) R(root)),
// with R the misclassification count, so cc is relative to the root error.
// The weakest link is collapsed while g < cc; cc = 0 leaves the tree as is.
inline Tree prune_tree(const Tree& tree, double cc) {
  require(cc >= 0.0 && std::isfinite(cc), ErrorKind::invalid_config, "cost-complexity must be nonnegative");
  require(!tree.nodes.empty(), ErrorKind::invalid_config, "empty tree");
  Tree work = tree;
  const double root_err = static_cast<double>(work.nodes[static_cast<std::size_t>(work.root)].errors());
  if (root_err > 0.0) {
    while (true) {
      int weakest = -1;
      double weakest_g = std::numeric_limits<double>::infinity();
      std::vector<int> stack{work.root};
      while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        const TreeNode& n = work.nodes[static_cast<std::size_t>(id)];
        if (n.is_leaf()) continue;
        const detail::SubtreeStats s = detail::subtree_stats(work, id);
        const double g = (static_cast<double>(n.errors()) - static_cast<double>(s.errors)) /
                         (static_cast<double>(s.leaves - 1) * root_err);
        if (g < weakest_g || (g == weakest_g && id < weakest)) {
          weakest_g = g;
          weakest = id;
        }
        stack.push_back(n.right);
        stack.push_back(n.left);
      }
      if (weakest < 0 || !(weakest_g < cc)) break;
      TreeNode& w = work.nodes[static_cast<std::size_t>(weakest)];
      w.feature = -1;
      w.threshold = 0.0;
    }
  }
  Tree out;
  detail::copy_reachable(work, work.root, out);
  return out;
}

namespace detail {

inline std::string covariate_name(const std::vector<std::string>& names, int feature) {
  if (feature >= 0 && static_cast<std::size_t>(feature) < names.size()) return names[static_cast<std::size_t>(feature)];
  return "x" + std::to_string(feature);
}

inline void render(const Tree& t, int id, const std::vector<std::string>& names, int depth, std::ostringstream& os) {
  const TreeNode& n = t.nodes[static_cast<std::size_t>(id)];
  os << std::string(static_cast<std::size_t>(2 * depth), ' ');
  if (n.is_leaf()) {
    os << "leaf " << (n.label() ? "in" : "out");
  } else {
    os << "if " << covariate_name(names, n.feature) << " <= " << format_double(n.threshold);
  }
  os << "  [n=" << n.n() << " out=" << n.count_out << " in=" << n.count_in << "]\n";
  if (!n.is_leaf()) {
    render(t, n.left, names, depth + 1, os);
    render(t, n.right, names, depth + 1, os);
  }
}

}  // namespace detail

// Indented outline: each internal node prints its condition, then the
// subtree where the condition holds, then the other one.
inline std::string render_tree(const Tree& tree, const std::vector<std::string>& names = {}) {
  require(!tree.nodes.empty(), ErrorKind::invalid_config, "empty tree");
  std::ostringstream os;
  detail::render(tree, tree.root, names, 0, os);
  return os.str();
}

inline Tree parse_tree_outline(const std::string& text, const std::vector<std::string>& names = {}) {
  struct Line {
    int depth;
    TreeNode node;
  };
  std::vector<Line> lines;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  auto bad = [&](const std::string& why) {
    fail(ErrorKind::parse_error, "tree outline line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    if (detail::trim(raw).empty()) continue;
    const auto indent = raw.find_first_not_of(' ');
    if (indent % 2 != 0) bad("odd indentation");
    const auto bracket = raw.rfind("  [n=");
    if (bracket == std::string::npos) bad("missing counts");
    const std::string head = raw.substr(indent, bracket - indent);
    TreeNode node;
    std::size_t n = 0;
    if (std::sscanf(raw.c_str() + bracket, "  [n=%zu out=%zu in=%zu]", &n, &node.count_out, &node.count_in) != 3 ||
        n != node.n())
      bad("malformed counts");
    if (head.rfind("if ", 0) == 0) {
      const auto le = head.rfind(" <= ");
      if (le == std::string::npos) bad("missing condition");
      const std::string name = head.substr(3, le - 3);
      if (!detail::parse_double(head.substr(le + 4), node.threshold)) bad("bad threshold");
      const auto it = std::find(names.begin(), names.end(), name);
      if (it != names.end()) {
        node.feature = static_cast<int>(it - names.begin());
      } else if (name.size() > 1 && name[0] == 'x' && name.find_first_not_of("0123456789", 1) == std::string::npos) {
        node.feature = std::stoi(name.substr(1));
      } else {
        bad("unknown covariate '" + name + "'");
      }
    } else if (head != "leaf in" && head != "leaf out") {
      bad("expected 'if' or 'leaf'");
    }
    lines.push_back({static_cast<int>(indent / 2), node});
  }
  require(!lines.empty(), ErrorKind::parse_error, "empty tree outline");

  Tree tree;
  std::size_t pos = 0;
  std::function<int(int)> build = [&](int depth) -> int {
    if (pos >= lines.size() || lines[pos].depth != depth)
      fail(ErrorKind::parse_error, "tree outline structure is inconsistent");
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(lines[pos].node);
    ++pos;
    if (!tree.nodes[static_cast<std::size_t>(id)].is_leaf()) {
      const int l = build(depth + 1);
      tree.nodes[static_cast<std::size_t>(id)].left = l;
      const int r = build(depth + 1);
      tree.nodes[static_cast<std::size_t>(id)].right = r;
    }
    return id;
  };
  build(0);
  require(pos == lines.size(), ErrorKind::parse_error, "trailing lines after the tree outline");
  return tree;
}

}  // namespace overlap
