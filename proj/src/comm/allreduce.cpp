#include <algorithm>
#include <barrier>
#include <exception>
#include <mutex>
#include <thread>
#include <tuple>

#include "topotune/comm.hpp"
#include "topotune/error.hpp"

namespace topotune {

int ShmLayout::block_at(int rank, int phase) const {
  const int slot = (rank + phase) % phases();
  return slot < blocks ? slot : -1;
}

ShmLayout block_layout(std::size_t length, int ranks, int cacheline) {
  if (length < 1 || ranks < 1 || cacheline < 4) throw Error("block_layout needs length >= 1, ranks >= 1, cacheline >= 4");
  ShmLayout l;
  l.length = length;
  l.ranks = ranks;
  const std::size_t bytes = length * static_cast<std::size_t>(l.elem_bytes);
  const std::size_t share = (bytes + static_cast<std::size_t>(ranks) - 1) / static_cast<std::size_t>(ranks);
  const std::size_t cl = static_cast<std::size_t>(cacheline);
  l.block_bytes = static_cast<int>(std::max(cl, (share + cl - 1) / cl * cl));
  l.blocks = static_cast<int>((bytes + static_cast<std::size_t>(l.block_bytes) - 1) / static_cast<std::size_t>(l.block_bytes));
  for (int r = 0; r < ranks; ++r) l.rank_start.push_back(l.block_at(r, 0));
  return l;
}

AllreduceResult rank_shifted_allreduce(const std::vector<std::vector<float>>& inputs, const ShmLayout& layout) {
  if (static_cast<int>(inputs.size()) != layout.ranks) throw Error("expected one input per rank");
  for (const auto& in : inputs) {
    if (in.size() != layout.length) throw Error("input length mismatch");
  }
  const int R = layout.ranks;
  const int phases = layout.phases();
  const std::size_t be = layout.block_elems();
  AllreduceResult res;
  // padded to whole blocks so every block is cacheline sized
  std::vector<float> shared(static_cast<std::size_t>(layout.blocks) * be, 0.0f);
  res.per_rank.assign(static_cast<std::size_t>(R), {});
  std::vector<std::vector<BlockWrite>> logs(static_cast<std::size_t>(R));
  std::barrier sync(R);
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto worker = [&](int r) {
    try {
      const auto& in = inputs[static_cast<std::size_t>(r)];
      for (int p = 0; p < phases; ++p) {
        const int b = layout.block_at(r, p);
        if (b >= 0) {
          const std::size_t lo = static_cast<std::size_t>(b) * be;
          const std::size_t hi = std::min(lo + be, layout.length);
          for (std::size_t i = lo; i < hi; ++i) shared[i] += in[i];
          logs[static_cast<std::size_t>(r)].push_back({p, r, b});
        }
        sync.arrive_and_wait();
      }
      res.per_rank[static_cast<std::size_t>(r)].assign(shared.begin(), shared.begin() + static_cast<long>(layout.length));
    } catch (...) {
      std::lock_guard<std::mutex> g(failure_mu);
      if (!failure) failure = std::current_exception();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(R));
  for (int r = 0; r < R; ++r) pool.emplace_back(worker, r);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  res.sum.assign(shared.begin(), shared.begin() + static_cast<long>(layout.length));
  for (auto& l : logs) res.writes.insert(res.writes.end(), l.begin(), l.end());
  std::sort(res.writes.begin(), res.writes.end(), [](const BlockWrite& a, const BlockWrite& b) {
    return std::tie(a.phase, a.rank) < std::tie(b.phase, b.rank);
  });
  return res;
}

std::vector<float> sequential_sum(const std::vector<std::vector<float>>& inputs) {
  if (inputs.empty()) return {};
  std::vector<float> out(inputs.front().size(), 0.0f);
  for (const auto& in : inputs) {
    if (in.size() != out.size()) throw Error("input length mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i];
  }
  return out;
}

}  // namespace topotune
