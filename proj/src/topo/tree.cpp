#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "topotune/error.hpp"
#include "topotune/topo.hpp"

namespace topotune {

std::string kind_name(NodeKind kind, int cache_level, const std::string& label) {
  switch (kind) {
    case NodeKind::machine: return "machine";
    case NodeKind::package: return "package";
    case NodeKind::numa: return "numa";
    case NodeKind::cache: return "cache" + std::to_string(cache_level);
    case NodeKind::group: return "group:" + (label.empty() ? std::string("group") : label);
    case NodeKind::pu: return "pu";
  }
  return "?";
}

TopoNode make_pu(CoreId id) {
  TopoNode n;
  n.kind = NodeKind::pu;
  n.index = id;
  return n;
}

TopoNode make_node(NodeKind kind, std::vector<TopoNode> children, int index) {
  TopoNode n;
  n.kind = kind;
  n.index = index;
  n.children = std::move(children);
  return n;
}

namespace {

void check_node(const TopoNode& node, int depth, bool is_root, std::vector<std::size_t>& levels,
                int& leaf_depth, std::set<CoreId>& seen) {
  if (node.kind == NodeKind::machine && !is_root) throw TopoError("machine node below the root");
  if (levels.size() <= static_cast<std::size_t>(depth)) levels.resize(static_cast<std::size_t>(depth) + 1, 0);
  ++levels[static_cast<std::size_t>(depth)];
  if (node.kind == NodeKind::pu) {
    if (!node.children.empty()) throw TopoError("pu node with children");
    if (node.index < 0) throw TopoError("pu with negative cpu id");
    if (!seen.insert(node.index).second) throw TopoError("duplicate cpu id " + std::to_string(node.index));
    if (leaf_depth < 0) leaf_depth = depth;
    else if (leaf_depth != depth) throw TopoError("unequal leaf depth");
    return;
  }
  if (node.children.empty()) throw TopoError(kind_name(node.kind, node.cache_level, node.label) + " node without children");
  for (const auto& c : node.children) check_node(c, depth + 1, false, levels, leaf_depth, seen);
}

void collect_at(const TopoNode& node, int depth, int target, std::vector<const TopoNode*>& out) {
  if (depth == target) {
    out.push_back(&node);
    return;
  }
  for (const auto& c : node.children) collect_at(c, depth + 1, target, out);
}

void collect_leaves(const TopoNode& node, std::vector<CoreId>& out) {
  if (node.is_leaf()) {
    out.push_back(node.index);
    return;
  }
  for (const auto& c : node.children) collect_leaves(c, out);
}

// Interned isomorphism class of a subtree, ignoring ids and group labels.
int shape_code(const TopoNode& node, std::map<std::pair<int, std::vector<int>>, int>& table,
               std::vector<std::vector<int>>& per_depth, int depth) {
  std::vector<int> kids;
  kids.reserve(node.children.size());
  for (const auto& c : node.children) kids.push_back(shape_code(c, table, per_depth, depth + 1));
  std::sort(kids.begin(), kids.end());
  int tag = static_cast<int>(node.kind) * 1000 + node.cache_level;
  auto key = std::make_pair(tag, std::move(kids));
  auto it = table.find(key);
  int code;
  if (it == table.end()) {
    code = static_cast<int>(table.size());
    table.emplace(std::move(key), code);
  } else {
    code = it->second;
  }
  if (per_depth.size() <= static_cast<std::size_t>(depth)) per_depth.resize(static_cast<std::size_t>(depth) + 1);
  per_depth[static_cast<std::size_t>(depth)].push_back(code);
  return code;
}

}  // namespace

TopoTree::TopoTree(TopoNode root) : root_(std::move(root)) {
  if (root_.kind != NodeKind::machine) throw TopoError("root must be a machine node");
  int leaf_depth = -1;
  std::set<CoreId> seen;
  check_node(root_, 0, true, levels_, leaf_depth, seen);
}

std::vector<CoreId> TopoTree::cores() const { return leaf_ids(root_); }

std::vector<const TopoNode*> TopoTree::nodes_at(int depth) const {
  std::vector<const TopoNode*> out;
  if (depth < 0 || depth >= height()) return out;
  collect_at(root_, 0, depth, out);
  return out;
}

std::vector<CoreId> leaf_ids(const TopoNode& node) {
  std::vector<CoreId> out;
  collect_leaves(node, out);
  std::sort(out.begin(), out.end());
  return out;
}

bool is_symmetric(const TopoTree& tree) {
  std::map<std::pair<int, std::vector<int>>, int> table;
  std::vector<std::vector<int>> per_depth;
  shape_code(tree.root(), table, per_depth, 0);
  for (const auto& codes : per_depth) {
    if (std::adjacent_find(codes.begin(), codes.end(), std::not_equal_to<>()) != codes.end()) return false;
  }
  return true;
}

std::optional<int> tiling_stride(const TopoTree& tree, int depth) {
  if (depth < 0 || depth > tree.leaf_depth()) throw TopoError("depth out of range: " + std::to_string(depth));
  if (depth == 0) return 1;
  int g = 0;
  for (const TopoNode* parent : tree.nodes_at(depth - 1)) {
    std::vector<std::vector<CoreId>> sets;
    sets.reserve(parent->children.size());
    for (const auto& c : parent->children) sets.push_back(leaf_ids(c));
    auto base = std::min_element(sets.begin(), sets.end(),
                                 [](const auto& a, const auto& b) { return a.front() < b.front(); });
    for (const auto& s : sets) {
      if (&s == &*base) continue;
      if (s.size() != base->size()) return std::nullopt;
      int off = s.front() - base->front();
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] - (*base)[i] != off) return std::nullopt;
      }
      g = std::gcd(g, off);
    }
  }
  return g == 0 ? 1 : g;
}

bool is_tileable(const TopoTree& tree) {
  for (int d = 0; d <= tree.leaf_depth(); ++d) {
    if (!tiling_stride(tree, d)) return false;
  }
  return true;
}

TopoTree flat_tree(int pus) {
  if (pus < 1) throw TopoError("flat tree needs at least one pu");
  std::vector<TopoNode> kids;
  for (int i = 0; i < pus; ++i) kids.push_back(make_pu(i));
  return TopoTree(make_node(NodeKind::machine, std::move(kids)));
}

}  // namespace topotune
