#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "topotune/error.hpp"
#include "topotune/topo.hpp"

namespace topotune {

namespace {

struct Entry {
  int id = 0;
  NodeKind kind = NodeKind::pu;
  int cache_level = 0;
  std::string label;
  std::optional<int> parent;
  std::optional<int> cpu;
  int line = 0;
  std::vector<std::size_t> kids;
};

std::optional<int> to_int(std::string_view s) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

bool parse_kind(std::string_view s, Entry& e) {
  if (s == "machine") e.kind = NodeKind::machine;
  else if (s == "package") e.kind = NodeKind::package;
  else if (s == "numa") e.kind = NodeKind::numa;
  else if (s == "pu") e.kind = NodeKind::pu;
  else if (s.starts_with("cache")) {
    auto lvl = to_int(s.substr(5));
    if (!lvl || *lvl < 0) return false;
    e.kind = NodeKind::cache;
    e.cache_level = *lvl;
  } else if (s.starts_with("group:")) {
    e.kind = NodeKind::group;
    e.label = std::string(s.substr(6));
    if (e.label.empty()) return false;
  } else {
    return false;
  }
  return true;
}

}  // namespace

TopoTree parse_topology(std::string_view text) {
  std::vector<Entry> entries;
  std::map<int, std::size_t> by_id;
  std::map<int, int> cpu_line;
  bool header = false;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream in(line);
    std::vector<std::string> tok;
    for (std::string w; in >> w;) tok.push_back(w);
    if (tok.empty()) continue;
    if (!header) {
      if (tok.size() != 2 || tok[0] != "topo" || tok[1] != "v1") throw ParseError(lineno, "expected header 'topo v1'");
      header = true;
      continue;
    }
    if (tok[0] != "node" || tok.size() < 4 || tok.size() > 5) throw ParseError(lineno, "expected 'node <id> <kind> parent=<id|-> [cpu=<int>]'");
    Entry e;
    e.line = lineno;
    auto id = to_int(tok[1]);
    if (!id || *id < 0) throw ParseError(lineno, "bad node id '" + tok[1] + "'");
    e.id = *id;
    if (!parse_kind(tok[2], e)) throw ParseError(lineno, "unknown node kind '" + tok[2] + "'");
    if (!tok[3].starts_with("parent=")) throw ParseError(lineno, "expected parent=");
    std::string pv = tok[3].substr(7);
    if (pv != "-") {
      auto p = to_int(pv);
      if (!p) throw ParseError(lineno, "bad parent id '" + pv + "'");
      e.parent = *p;
    }
    if (tok.size() == 5) {
      if (!tok[4].starts_with("cpu=")) throw ParseError(lineno, "unexpected field '" + tok[4] + "'");
      auto c = to_int(tok[4].substr(4));
      if (!c || *c < 0) throw ParseError(lineno, "bad cpu id '" + tok[4] + "'");
      e.cpu = *c;
    }
    if ((e.kind == NodeKind::pu) != e.cpu.has_value()) throw ParseError(lineno, "cpu= is required exactly for pu nodes");
    if (e.cpu) {
      auto [it, fresh] = cpu_line.emplace(*e.cpu, lineno);
      if (!fresh) throw ParseError(lineno, "duplicate cpu id " + std::to_string(*e.cpu) + " (first at line " + std::to_string(it->second) + ")");
    }
    if (!by_id.emplace(e.id, entries.size()).second) throw ParseError(lineno, "duplicate node id " + std::to_string(e.id));
    entries.push_back(std::move(e));
  }
  if (!header) throw ParseError(lineno, "missing header 'topo v1'");
  if (entries.empty()) throw ParseError(lineno, "no nodes");

  std::optional<std::size_t> root;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    if (!e.parent) {
      if (root) throw ParseError(e.line, "second root node");
      if (e.kind != NodeKind::machine) throw ParseError(e.line, "root must be a machine node");
      root = i;
      continue;
    }
    if (e.kind == NodeKind::machine) throw ParseError(e.line, "machine node below the root");
    auto it = by_id.find(*e.parent);
    if (it == by_id.end()) throw ParseError(e.line, "orphan node: parent " + std::to_string(*e.parent) + " not defined");
    entries[it->second].kids.push_back(i);
  }
  if (!root) throw ParseError(lineno, "no root node (parent=-)");

  std::vector<char> reached(entries.size(), 0);
  int leaf_depth = -1;
  int numa_index = 0;
  std::vector<int> numa_of(entries.size(), -1);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].kind == NodeKind::numa) numa_of[i] = numa_index++;
  }
  std::function<TopoNode(std::size_t, int)> build = [&](std::size_t i, int depth) {
    const Entry& e = entries[i];
    reached[i] = 1;
    TopoNode n;
    n.kind = e.kind;
    n.cache_level = e.cache_level;
    n.label = e.label;
    if (e.kind == NodeKind::pu) {
      if (!e.kids.empty()) throw ParseError(entries[e.kids.front()].line, "pu node cannot have children");
      if (leaf_depth < 0) leaf_depth = depth;
      else if (leaf_depth != depth) throw ParseError(e.line, "unequal leaf depth");
      n.index = *e.cpu;
      return n;
    }
    if (e.kids.empty()) throw ParseError(e.line, "non-pu node without children");
    n.index = numa_of[i];
    for (std::size_t k : e.kids) n.children.push_back(build(k, depth + 1));
    return n;
  };
  TopoNode tree_root = build(*root, 0);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!reached[i]) throw ParseError(entries[i].line, "orphan node: not reachable from the root");
  }
  return TopoTree(std::move(tree_root));
}

TopoTree load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TopoError("cannot open topology file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_topology(ss.str());
}

std::string format_topology(const TopoTree& tree) {
  std::ostringstream out;
  out << "topo v1\n";
  int next = 0;
  std::function<void(const TopoNode&, int)> emit = [&](const TopoNode& n, int parent) {
    int id = next++;
    out << "node " << id << ' ' << kind_name(n.kind, n.cache_level, n.label) << " parent=";
    if (parent < 0) out << '-';
    else out << parent;
    if (n.kind == NodeKind::pu) out << " cpu=" << n.index;
    out << '\n';
    for (const auto& c : n.children) emit(c, id);
  };
  emit(tree.root(), -1);
  return out.str();
}

}  // namespace topotune
