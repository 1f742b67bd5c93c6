#pragma once

#include <cstddef>
#include <vector>

namespace topotune {

struct ShmLayout {
  std::size_t length = 0;
  int ranks = 1;
  int elem_bytes = 4;
  int block_bytes = 64;
  int blocks = 1;
  // first block each rank touches (phase 0)
  std::vector<int> rank_start;

  std::size_t block_elems() const { return static_cast<std::size_t>(block_bytes / elem_bytes); }
  // Rotation length: ranks beyond the block count idle on the virtual slots.
  int phases() const { return blocks > ranks ? blocks : ranks; }
  int block_at(int rank, int phase) const;
};

ShmLayout block_layout(std::size_t length, int ranks, int cacheline = 64);

struct BlockWrite {
  int phase;
  int rank;
  int block;
};

struct AllreduceResult {
  std::vector<float> sum;
  std::vector<std::vector<float>> per_rank;
  std::vector<BlockWrite> writes;
};

/// Phased reduction into one shared buffer; one worker thread per rank and a barrier per phase.
AllreduceResult rank_shifted_allreduce(const std::vector<std::vector<float>>& inputs, const ShmLayout& layout);

std::vector<float> sequential_sum(const std::vector<std::vector<float>>& inputs);

}  // namespace topotune
