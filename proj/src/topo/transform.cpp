#include <algorithm>
#include <cstdint>

#include "topotune/error.hpp"
#include "topotune/topo.hpp"

namespace topotune {

namespace {

// Child count shared by every node at `depth`, or 0 when it varies.
std::size_t uniform_children(const TopoTree& tree, int depth) {
  std::size_t c = 0;
  for (const TopoNode* n : tree.nodes_at(depth)) {
    if (c == 0) c = n->children.size();
    else if (c != n->children.size()) return 0;
  }
  return c;
}

TopoNode regroup(const TopoNode& node, int depth, const GroupOp& op) {
  TopoNode out;
  out.kind = node.kind;
  out.cache_level = node.cache_level;
  out.label = node.label;
  out.index = node.index;
  if (depth + 1 < op.d) {
    out.children.reserve(node.children.size());
    for (const auto& c : node.children) out.children.push_back(regroup(c, depth + 1, op));
    return out;
  }
  const std::size_t c = node.children.size();
  const std::size_t n = static_cast<std::size_t>(op.n);
  const std::size_t t = static_cast<std::size_t>(op.t);
  const std::size_t block = n * t;
  for (std::size_t b = 0; b < c / block; ++b) {
    for (std::size_t j = 0; j < t; ++j) {
      TopoNode g;
      g.kind = NodeKind::group;
      g.label = op.label.empty() ? "group" : op.label;
      for (std::size_t i = 0; i < n; ++i) g.children.push_back(node.children[b * block + j + i * t]);
      out.children.push_back(std::move(g));
    }
  }
  return out;
}

TopoNode trim(const TopoNode& node, int depth, const RemoveOp& op) {
  TopoNode out;
  out.kind = node.kind;
  out.cache_level = node.cache_level;
  out.label = node.label;
  out.index = node.index;
  std::size_t keep = node.children.size();
  if (depth + 1 == op.d) keep -= static_cast<std::size_t>(op.n);
  out.children.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    out.children.push_back(depth + 1 < op.d ? trim(node.children[i], depth + 1, op) : node.children[i]);
  }
  return out;
}

}  // namespace

TopoTree apply_group(const TopoTree& tree, const GroupOp& op) {
  if (op.n < 2 || op.t < 1) throw TransformError("group needs n >= 2 and t >= 1");
  if (op.d < 1 || op.d > tree.leaf_depth()) throw TransformError("group depth out of range: " + std::to_string(op.d));
  const std::size_t c = uniform_children(tree, op.d - 1);
  if (c == 0) throw TransformError("grouping breaks symmetry: parents have differing child counts");
  const std::size_t block = static_cast<std::size_t>(op.n) * static_cast<std::size_t>(op.t);
  if (c % static_cast<std::size_t>(op.n) != 0 || c % block != 0) {
    throw TransformError("group(" + std::to_string(op.n) + "," + std::to_string(op.t) + ") does not partition " + std::to_string(c) + " children");
  }
  TopoTree out(regroup(tree.root(), 0, op));
  if (!is_symmetric(out) || !is_tileable(out)) throw TransformError("grouping breaks symmetry or tiling");
  return out;
}

TopoTree apply_remove(const TopoTree& tree, const RemoveOp& op) {
  if (op.n < 1) throw TransformError("remove needs n >= 1");
  if (op.d < 1 || op.d > tree.leaf_depth()) throw TransformError("remove depth out of range: " + std::to_string(op.d));
  for (const TopoNode* p : tree.nodes_at(op.d - 1)) {
    if (p->children.size() <= static_cast<std::size_t>(op.n)) {
      throw TransformError("remove(" + std::to_string(op.n) + ") needs more than " + std::to_string(op.n) + " children per parent, found " + std::to_string(p->children.size()));
    }
  }
  return TopoTree(trim(tree.root(), 0, op));
}

std::vector<GroupOp> candidate_groups(const TopoTree& tree) {
  std::vector<GroupOp> out;
  for (int d = 1; d <= tree.leaf_depth(); ++d) {
    const int c = static_cast<int>(uniform_children(tree, d - 1));
    for (int n = 2; n <= c; ++n) {
      if (c % n != 0) continue;
      for (int t = 1; t <= c / n; ++t) {
        if (c % (n * t) == 0) out.push_back({n, t, d, {}});
      }
    }
  }
  return out;
}

std::vector<RemoveOp> candidate_removes(const TopoTree& tree) {
  std::vector<RemoveOp> out;
  for (int d = 1; d <= tree.leaf_depth(); ++d) {
    std::size_t cmin = SIZE_MAX;
    for (const TopoNode* p : tree.nodes_at(d - 1)) cmin = std::min(cmin, p->children.size());
    for (std::size_t n = 1; n < cmin; ++n) out.push_back({static_cast<int>(n), d});
  }
  return out;
}

}  // namespace topotune
