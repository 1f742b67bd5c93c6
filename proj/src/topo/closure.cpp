#include <set>
#include <utility>

#include "topotune/error.hpp"
#include "topotune/topo.hpp"

namespace topotune {

std::vector<TopoTree> enumerate_group_closure(const TopoTree& tree, const ClosureOptions& opts) {
  if (!is_symmetric(tree) || !is_tileable(tree)) throw TopoError("group closure needs a symmetric, tileable tree");
  std::vector<TopoTree> out{tree};
  std::set<TreeDigest> seen{canonical_digest(tree)};
  std::vector<std::size_t> frontier{0};
  while (!frontier.empty()) {
    std::vector<std::vector<std::pair<TreeDigest, TopoTree>>> found(frontier.size());
    const long count = static_cast<long>(frontier.size());
#pragma omp parallel for schedule(dynamic) if (opts.parallel)
    for (long i = 0; i < count; ++i) {
      const TopoTree& src = out[frontier[static_cast<std::size_t>(i)]];
      for (const GroupOp& op : candidate_groups(src)) {
        try {
          TopoTree next = apply_group(src, op);
          found[static_cast<std::size_t>(i)].emplace_back(canonical_digest(next), std::move(next));
        } catch (const TransformError&) {
        }
      }
    }
    std::vector<std::size_t> next_frontier;
    for (auto& batch : found) {
      for (auto& [d, t] : batch) {
        if (!seen.insert(d).second) continue;
        if (out.size() >= opts.max_trees) {
          throw LimitError("group closure exceeds " + std::to_string(opts.max_trees) + " trees");
        }
        next_frontier.push_back(out.size());
        out.push_back(std::move(t));
      }
    }
    frontier = std::move(next_frontier);
  }
  return out;
}

}  // namespace topotune
