#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace topotune {

using CoreId = int;

enum class NodeKind : std::uint8_t { machine, package, numa, cache, group, pu };

std::string kind_name(NodeKind kind, int cache_level = 0, const std::string& label = {});

struct TopoNode {
  NodeKind kind = NodeKind::pu;
  int cache_level = 0;
  std::string label;
  // CoreId for pu leaves, memory-domain index for numa nodes, -1 otherwise.
  int index = -1;
  std::vector<TopoNode> children;

  bool is_leaf() const { return children.empty(); }
  CoreId core() const { return index; }
};

TopoNode make_pu(CoreId id);
TopoNode make_node(NodeKind kind, std::vector<TopoNode> children, int index = -1);

/// Immutable rooted tree with processing-unit leaves at a common depth.
class TopoTree {
 public:
  explicit TopoTree(TopoNode root);

  const TopoNode& root() const { return root_; }
  int leaf_depth() const { return static_cast<int>(levels_.size()) - 1; }
  int height() const { return static_cast<int>(levels_.size()); }
  std::size_t level_count(int depth) const { return levels_.at(static_cast<std::size_t>(depth)); }
  const std::vector<std::size_t>& level_counts() const { return levels_; }
  std::size_t pu_count() const { return levels_.back(); }

  std::vector<CoreId> cores() const;
  std::vector<const TopoNode*> nodes_at(int depth) const;

 private:
  TopoNode root_;
  std::vector<std::size_t> levels_;
};

struct GroupOp {
  int n = 2;
  int t = 1;
  int d = 1;
  std::string label;
};

struct RemoveOp {
  int n = 1;
  int d = 1;
};

using TreeDigest = std::array<std::uint8_t, 32>;

std::string to_hex(const TreeDigest& digest);
TreeDigest sha256_of(std::string_view bytes);

TopoTree parse_topology(std::string_view text);
TopoTree load_topology(const std::string& path);
std::string format_topology(const TopoTree& tree);

/// Sorted leaf ids under a node.
std::vector<CoreId> leaf_ids(const TopoNode& node);

bool is_symmetric(const TopoTree& tree);

/// Common stride of the sibling leaf sets at `depth`. Every child of a parent at
/// depth-1 must be a translate of its lowest sibling; the stride is the gcd of
/// the translation offsets, 1 when no parent has more than one child.
std::optional<int> tiling_stride(const TopoTree& tree, int depth);
bool is_tileable(const TopoTree& tree);

TopoTree apply_group(const TopoTree& tree, const GroupOp& op);
TopoTree apply_remove(const TopoTree& tree, const RemoveOp& op);

/// Candidate ops for one tree, in generation order; group candidates may still
/// be rejected by apply_group.
std::vector<GroupOp> candidate_groups(const TopoTree& tree);
std::vector<RemoveOp> candidate_removes(const TopoTree& tree);

TreeDigest digest(const TopoTree& tree);
// Same as digest but a chain of single-child internal nodes hashes as its top node, so
// grouping that adds no partition information collapses.
TreeDigest canonical_digest(const TopoTree& tree);

struct ClosureOptions {
  std::size_t max_trees = 100000;
  bool parallel = false;
};

std::vector<TopoTree> enumerate_group_closure(const TopoTree& tree, const ClosureOptions& opts = {});

std::uint64_t brute_force_group_count(std::uint64_t n);

struct GroupCountBound {
  boost::multiprecision::cpp_rational general;
  std::optional<double> power_of_two;
};

GroupCountBound group_count_upper_bound(int n);

TopoTree flat_tree(int pus);

}  // namespace topotune
