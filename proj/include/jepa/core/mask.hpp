#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <vector>

namespace jepa {

// Boolean attention mask over [query rows x key cols]. allow[i*cols+j] != 0
// means query i may read key j. finalize() validates the mask and detects
// prefix structure so attention can skip masked columns entirely.
struct AttnMask {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<std::uint8_t> allow;

  // Set by finalize(). A mask is "prefix" when every row allows exactly the
  // contiguous range [0, prefix_len[i]). Rows are grouped into runs of equal
  // prefix length for block GEMMs.
  bool is_prefix = false;
  std::vector<Eigen::Index> prefix_len;
  struct Run {
    Eigen::Index row_begin = 0;
    Eigen::Index row_count = 0;
    Eigen::Index prefix = 0;
  };
  std::vector<Run> runs;

  // GEMM tiling over the prefix structure. A pure tile has one prefix for all
  // of its rows and never touches masked columns; an impure tile covers
  // max(prefix) columns and re-masks the per-row tail.
  struct Tile {
    Eigen::Index row_begin = 0;
    Eigen::Index row_count = 0;
    Eigen::Index prefix = 0;
    bool pure = true;
  };
  std::vector<Tile> tiles;

  AttnMask() = default;
  AttnMask(Eigen::Index r, Eigen::Index c, bool fill);

  static AttnMask full(Eigen::Index rows, Eigen::Index cols);
  static AttnMask causal(Eigen::Index n);

  bool at(Eigen::Index i, Eigen::Index j) const { return allow[size_t(i * cols + j)] != 0; }
  void set(Eigen::Index i, Eigen::Index j, bool v) { allow[size_t(i * cols + j)] = v ? 1 : 0; }

  // Throws if any row allows nothing (softmax would be undefined there).
  void finalize();
};

using MaskPtr = std::shared_ptr<const AttnMask>;

MaskPtr finalized(AttnMask m);

}  // namespace jepa
