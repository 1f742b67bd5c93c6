#include <algorithm>
#include <functional>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "topotune/error.hpp"
#include "topotune/topo.hpp"

using namespace topotune;

namespace {

const std::string kData = TOPOTUNE_DATA_DIR;

TopoTree two_numa(std::vector<CoreId> a, std::vector<CoreId> b) {
  std::vector<TopoNode> na, nb;
  for (auto c : a) na.push_back(make_pu(c));
  for (auto c : b) nb.push_back(make_pu(c));
  std::vector<TopoNode> kids;
  kids.push_back(make_node(NodeKind::numa, na, 0));
  kids.push_back(make_node(NodeKind::numa, nb, 1));
  return TopoTree(make_node(NodeKind::machine, kids));
}

TopoTree packages(int pkgs, int per) {
  std::vector<TopoNode> kids;
  int id = 0;
  for (int p = 0; p < pkgs; ++p) {
    std::vector<TopoNode> pus;
    for (int i = 0; i < per; ++i) pus.push_back(make_pu(id++));
    kids.push_back(make_node(NodeKind::package, pus));
  }
  return TopoTree(make_node(NodeKind::machine, kids));
}

// Unordered structure with leaf ids, independent of the digest code.
std::string structure(const TopoNode& n) {
  if (n.is_leaf()) return std::to_string(n.index);
  std::vector<std::string> kids;
  for (const auto& c : n.children) kids.push_back(structure(c));
  std::sort(kids.begin(), kids.end());
  std::string s = std::to_string(static_cast<int>(n.kind)) + "(";
  for (const auto& k : kids) s += k + ",";
  return s + ")";
}

// Counts set partitions of [0,n) into blocks of size k where every block is an
// arithmetic progression with one shared difference t <= n/k.
std::uint64_t ap_partitions(int n, int k) {
  std::uint64_t total = 0;
  for (int t = 1; t <= n / k; ++t) {
    std::vector<int> used(static_cast<std::size_t>(n), 0);
    std::function<std::uint64_t()> rec = [&]() -> std::uint64_t {
      int first = -1;
      for (int i = 0; i < n; ++i) {
        if (!used[static_cast<std::size_t>(i)]) {
          first = i;
          break;
        }
      }
      if (first < 0) return 1;
      for (int i = 0; i < k; ++i) {
        int p = first + i * t;
        if (p >= n || used[static_cast<std::size_t>(p)]) return 0;
      }
      for (int i = 0; i < k; ++i) used[static_cast<std::size_t>(first + i * t)] = 1;
      std::uint64_t r = rec();
      for (int i = 0; i < k; ++i) used[static_cast<std::size_t>(first + i * t)] = 0;
      return r;
    };
    total += rec();
  }
  return total;
}

std::uint64_t exhaustive_count(int n) {
  if (n == 1) return 1;
  std::uint64_t s = 0;
  for (int k = 2; k <= n; ++k) {
    if (n % k == 0) s += exhaustive_count(n / k) * ap_partitions(n, k);
  }
  return s;
}

}  // namespace

TEST_CASE("parse four-socket kunpeng file") {
  TopoTree t = load_topology(kData + "/kunpeng920.topo");
  CHECK(t.pu_count() == 192);
  CHECK(t.level_counts() == std::vector<std::size_t>{1, 4, 8, 192});
  auto numa = t.nodes_at(2);
  REQUIRE(numa.size() == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(numa[static_cast<std::size_t>(i)]->kind == NodeKind::numa);
    CHECK(numa[static_cast<std::size_t>(i)]->index == i);
  }
  auto cores = t.cores();
  CHECK(cores.front() == 0);
  CHECK(cores.back() == 191);
  CHECK(is_symmetric(t));
  CHECK(is_tileable(t));
}

TEST_CASE("parse minimal tree") {
  TopoTree t = parse_topology("topo v1\nnode 0 machine parent=-\nnode 1 pu parent=0 cpu=7\n");
  CHECK(t.pu_count() == 1);
  CHECK(t.cores() == std::vector<CoreId>{7});
  CHECK(is_symmetric(t));
}

TEST_CASE("parse errors report the offending line") {
  auto line_of = [](const std::string& text) {
    try {
      parse_topology(text);
    } catch (const ParseError& e) {
      return e.line;
    }
    return -1;
  };
  const std::string head = "topo v1\nnode 0 machine parent=-\n";
  CHECK(line_of(head + "node 1 pu parent=0 cpu=3\nnode 2 pu parent=0 cpu=3\n") == 4);
  CHECK(line_of(head + "node 1 pu parent=0\n") == 3);
  CHECK(line_of(head + "node 1 pu parent=9 cpu=0\n") == 3);
  CHECK(line_of(head + "node 1 qpu parent=0 cpu=0\n") == 3);
  CHECK(line_of(head + "node 1 pu parent=0 cpu=0\nnode 1 pu parent=0 cpu=1\n") == 4);
  CHECK(line_of(head + "node 1 numa parent=0\nnode 2 pu parent=1 cpu=0\nnode 3 pu parent=0 cpu=1\n") == 5);
  CHECK(line_of(head + "node 1 numa parent=0\n") == 3);
  CHECK(line_of(head + "node 1 pu parent=0 cpu=0\nnode 2 pu parent=1 cpu=1\n") == 4);
  CHECK(line_of(head + "node 1 numa parent=2\nnode 2 numa parent=1\nnode 3 pu parent=0 cpu=0\n") == 3);
  CHECK(line_of("node 0 machine parent=-\n") == 1);
  CHECK(line_of("topo v1\nnode 0 package parent=-\nnode 1 pu parent=0 cpu=0\n") == 2);
}

TEST_CASE("format then parse preserves the tree") {
  TopoTree t = load_topology(kData + "/ccl144.topo");
  TopoTree back = parse_topology(format_topology(t));
  CHECK(digest(back) == digest(t));
  CHECK(back.level_counts() == t.level_counts());
}

TEST_CASE("symmetry") {
  TopoTree t = load_topology(kData + "/kunpeng920.topo");
  CHECK(is_symmetric(t));
  std::vector<CoreId> a, b;
  for (int i = 0; i < 24; ++i) a.push_back(i);
  for (int i = 24; i < 47; ++i) b.push_back(i);
  CHECK_FALSE(is_symmetric(two_numa(a, b)));
  CHECK(is_symmetric(flat_tree(1)));
}

TEST_CASE("tiling stride") {
  TopoTree k = load_topology(kData + "/kunpeng920.topo");
  CHECK(tiling_stride(k, 2) == 24);
  CHECK(tiling_stride(k, 1) == 48);
  CHECK(tiling_stride(k, 3) == 1);
  CHECK(tiling_stride(k, 0) == 1);
  CHECK(tiling_stride(flat_tree(1), 1) == 1);

  TopoTree inter = two_numa({0, 2, 4}, {1, 3, 5});
  CHECK(tiling_stride(inter, 2) == 2);
  CHECK(tiling_stride(inter, 1) == 1);
  CHECK_FALSE(tiling_stride(two_numa({0, 1, 2}, {3, 5, 7}), 1).has_value());
  CHECK_THROWS_AS(tiling_stride(k, 4), TopoError);
}

TEST_CASE("group at pu level of kunpeng inserts 48 clusters") {
  TopoTree k = load_topology(kData + "/kunpeng920.topo");
  TopoTree g = apply_group(k, {4, 1, 3, "L3-Tag"});
  CHECK(g.level_counts() == std::vector<std::size_t>{1, 4, 8, 48, 192});
  auto groups = g.nodes_at(3);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    CHECK(groups[i]->kind == NodeKind::group);
    CHECK(groups[i]->label == "L3-Tag");
    auto ids = leaf_ids(*groups[i]);
    CHECK(ids == std::vector<CoreId>{int(4 * i), int(4 * i + 1), int(4 * i + 2), int(4 * i + 3)});
  }
  CHECK(k.height() == 4);
  CHECK(is_symmetric(g));
  CHECK(is_tileable(g));
}

TEST_CASE("group edge cases") {
  TopoTree f = flat_tree(8);
  TopoTree whole = apply_group(f, {8, 1, 1, {}});
  CHECK(whole.level_counts() == std::vector<std::size_t>{1, 1, 8});

  // four siblings A..D of two cores each, stride 2 pairs A with C and B with D
  TopoTree four = packages(4, 2);
  TopoTree g = apply_group(four, {2, 2, 1, {}});
  auto groups = g.nodes_at(1);
  REQUIRE(groups.size() == 2);
  CHECK(leaf_ids(*groups[0]) == std::vector<CoreId>{0, 1, 4, 5});
  CHECK(leaf_ids(*groups[1]) == std::vector<CoreId>{2, 3, 6, 7});

  CHECK_THROWS_AS(apply_group(f, {3, 1, 1, {}}), TransformError);
  CHECK_THROWS_AS(apply_group(f, {2, 3, 1, {}}), TransformError);
  CHECK_THROWS_AS(apply_group(f, {1, 1, 1, {}}), TransformError);
  CHECK_THROWS_AS(apply_group(f, {2, 1, 2, {}}), TransformError);
  CHECK_THROWS_AS(apply_group(f, {2, 1, 0, {}}), TransformError);

  // cores listed out of order; adjacent pairs are not translates of each other
  std::vector<TopoNode> pus;
  for (int c : {0, 2, 4, 1, 3, 5}) pus.push_back(make_pu(c));
  TopoTree odd(make_node(NodeKind::machine, pus));
  CHECK_THROWS_AS(apply_group(odd, {2, 1, 1, {}}), TransformError);
  TopoTree ok = apply_group(odd, {3, 1, 1, {}});
  CHECK(leaf_ids(*ok.nodes_at(1)[0]) == std::vector<CoreId>{0, 2, 4});
}

TEST_CASE("remove") {
  TopoTree k = load_topology(kData + "/kunpeng920.topo");
  TopoTree g = apply_group(k, {4, 1, 3, "L3-Tag"});
  TopoTree rm = apply_remove(g, {1, 4});
  CHECK(rm.pu_count() == 144);
  for (const TopoNode* grp : rm.nodes_at(3)) CHECK(grp->children.size() == 3);
  CHECK(leaf_ids(*rm.nodes_at(3)[0]) == std::vector<CoreId>{0, 1, 2});
  CHECK(is_symmetric(rm));
  CHECK(is_tileable(rm));
  CHECK(g.pu_count() == 192);

  TopoTree one = apply_remove(g, {3, 4});
  for (const TopoNode* grp : one.nodes_at(3)) CHECK(grp->children.size() == 1);
  CHECK_THROWS_AS(apply_remove(k, {2, 2}), TransformError);
  CHECK_THROWS_AS(apply_remove(k, {0, 2}), TransformError);
  CHECK_THROWS_AS(apply_remove(k, {1, 4}), TransformError);

  TopoTree pk = apply_remove(k, {1, 1});
  CHECK(pk.pu_count() == 144);
}

TEST_CASE("remove scales the pu count by (c-n)/c") {
  TopoTree k = load_topology(kData + "/ccl144.topo");
  for (const RemoveOp& op : candidate_removes(k)) {
    std::size_t c = k.nodes_at(op.d - 1).front()->children.size();
    TopoTree r = apply_remove(k, op);
    CHECK(r.pu_count() * c == k.pu_count() * (c - static_cast<std::size_t>(op.n)));
    CHECK(is_symmetric(r));
    CHECK(is_tileable(r));
  }
}

TEST_CASE("digest") {
  TopoTree k = load_topology(kData + "/ccl144.topo");
  TopoTree a = apply_remove(apply_remove(k, {1, 2}), {1, 3});
  TopoTree b = apply_remove(apply_remove(k, {1, 3}), {1, 2});
  CHECK(digest(a) == digest(b));
  CHECK(digest(a) != digest(k));

  TopoTree copy = k;
  CHECK(digest(copy) == digest(k));

  TopoTree base = packages(2, 4);
  TopoTree swapped_across = two_numa({0, 1, 2, 5}, {4, 3, 6, 7});
  TopoTree plain = two_numa({0, 1, 2, 3}, {4, 5, 6, 7});
  CHECK(digest(swapped_across) != digest(plain));
  TopoTree swapped_within = two_numa({0, 3, 2, 1}, {4, 5, 6, 7});
  CHECK(digest(swapped_within) == digest(plain));
  CHECK(digest(base) != digest(plain));
  CHECK(to_hex(digest(plain)).size() == 64);
}

TEST_CASE("group closure matches the recursive and exhaustive counts") {
  const std::map<int, std::uint64_t> frozen{{1, 1}, {2, 1}, {4, 3}, {8, 12}, {16, 60}, {32, 360}, {64, 2520}};
  for (auto [n, expect] : frozen) {
    CAPTURE(n);
    CHECK(brute_force_group_count(static_cast<std::uint64_t>(n)) == expect);
    CHECK(exhaustive_count(n) == expect);
    if (n <= 32) CHECK(enumerate_group_closure(flat_tree(n)).size() == expect);
    CHECK(group_count_upper_bound(n).general >= expect);
  }
  CHECK_THROWS_AS(brute_force_group_count(6), TopoError);
  CHECK_THROWS_AS(brute_force_group_count(0), TopoError);
}

TEST_CASE("closure of tiny trees is the tree itself") {
  for (int n : {1, 2}) {
    auto c = enumerate_group_closure(flat_tree(n));
    REQUIRE(c.size() == 1);
    CHECK(digest(c[0]) == digest(flat_tree(n)));
  }
}

TEST_CASE("closure cap") {
  ClosureOptions o;
  o.max_trees = 10;
  CHECK_THROWS_AS(enumerate_group_closure(flat_tree(8), o), LimitError);
}

TEST_CASE("parallel closure equals serial closure") {
  for (const char* f : {"/kunpeng920.topo", "/ccl144.topo"}) {
    TopoTree t = load_topology(kData + f);
    ClosureOptions par;
    par.parallel = true;
    auto s = enumerate_group_closure(t);
    auto p = enumerate_group_closure(t, par);
    REQUIRE(s.size() == p.size());
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(digest(s[i]) == digest(p[i]));
  }
}

TEST_CASE("group order independence") {
  std::mt19937 rng(11);
  TopoTree base = packages(4, 8);
  for (int trial = 0; trial < 20; ++trial) {
    int t1 = 1 + static_cast<int>(rng() % 2);
    std::vector<std::pair<int, int>> pu_ops{{2, 1}, {2, 2}, {2, 4}, {4, 1}, {4, 2}};
    auto [n2, t2] = pu_ops[rng() % pu_ops.size()];
    TopoTree a = apply_group(apply_group(base, {n2, t2, 2, {}}), {2, t1, 1, {}});
    TopoTree b = apply_group(apply_group(base, {2, t1, 1, {}}), {n2, t2, 3, {}});
    CHECK(digest(a) == digest(b));
  }
}

TEST_CASE("bounds") {
  using boost::multiprecision::cpp_rational;
  CHECK(group_count_upper_bound(1).general == 1);
  CHECK(group_count_upper_bound(4).general == cpp_rational(256, 6));
  CHECK(group_count_upper_bound(4).power_of_two.has_value());
  CHECK(*group_count_upper_bound(4).power_of_two == doctest::Approx(4.0 / 6.0));
  CHECK_FALSE(group_count_upper_bound(6).power_of_two.has_value());
  for (int n : {2, 4, 8, 16}) CHECK(group_count_upper_bound(n).general >= brute_force_group_count(static_cast<std::uint64_t>(n)));
}

TEST_CASE("single remove descendants stay within n squared") {
  for (int n : {4, 8, 16, 32, 64}) {
    CAPTURE(n);
    ClosureOptions o;
    o.parallel = true;
    for (const TopoTree& g : enumerate_group_closure(flat_tree(n), o)) {
      std::set<TreeDigest> kids;
      for (const RemoveOp& op : candidate_removes(g)) kids.insert(canonical_digest(apply_remove(g, op)));
      CHECK(kids.size() <= static_cast<std::size_t>(n * n));
    }
  }
}

TEST_CASE("no digest collisions across a closure corpus") {
  std::map<std::string, TreeDigest> seen;
  std::set<TreeDigest> digests;
  for (const TopoTree& t : enumerate_group_closure(flat_tree(16))) {
    for (const RemoveOp& op : candidate_removes(t)) {
      TopoTree r = apply_remove(t, op);
      auto [it, fresh] = seen.emplace(structure(r.root()), digest(r));
      if (fresh) digests.insert(it->second);
      else CHECK(it->second == digest(r));
    }
    auto [it, fresh] = seen.emplace(structure(t.root()), digest(t));
    if (fresh) digests.insert(it->second);
  }
  CHECK(digests.size() == seen.size());
}
