#include <algorithm>
#include <cstring>

#include <openssl/evp.h>

#include "topotune/error.hpp"
#include "topotune/topo.hpp"

namespace topotune {

namespace {

TreeDigest sha256(const std::vector<std::uint8_t>& bytes) {
  TreeDigest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
    throw Error("sha256 failed");
  }
  return out;
}

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

TreeDigest node_digest(const TopoNode& node, bool collapse_unary) {
  std::vector<std::uint8_t> buf;
  if (node.is_leaf()) {
    buf.push_back('L');
    buf.push_back(static_cast<std::uint8_t>(node.kind));
    put_u32(buf, static_cast<std::uint32_t>(node.index));
    return sha256(buf);
  }
  const TopoNode* src = &node;
  while (collapse_unary && src->children.size() == 1 && !src->children.front().is_leaf()) src = &src->children.front();
  std::vector<TreeDigest> kids;
  kids.reserve(src->children.size());
  for (const auto& c : src->children) kids.push_back(node_digest(c, collapse_unary));
  std::sort(kids.begin(), kids.end());
  buf.reserve(10 + kids.size() * 32);
  buf.push_back('N');
  buf.push_back(static_cast<std::uint8_t>(node.kind));
  put_u32(buf, static_cast<std::uint32_t>(node.cache_level));
  put_u32(buf, static_cast<std::uint32_t>(kids.size()));
  for (const auto& k : kids) buf.insert(buf.end(), k.begin(), k.end());
  return sha256(buf);
}

}  // namespace

std::string to_hex(const TreeDigest& digest) {
  static const char* hex = "0123456789abcdef";
  std::string s;
  s.reserve(digest.size() * 2);
  for (auto b : digest) {
    s.push_back(hex[b >> 4]);
    s.push_back(hex[b & 15]);
  }
  return s;
}

TreeDigest sha256_of(std::string_view bytes) { return sha256(std::vector<std::uint8_t>(bytes.begin(), bytes.end())); }

TreeDigest digest(const TopoTree& tree) { return node_digest(tree.root(), false); }

TreeDigest canonical_digest(const TopoTree& tree) { return node_digest(tree.root(), true); }

}  // namespace topotune
