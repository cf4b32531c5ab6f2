#include "jepa/core/mask.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace jepa {

AttnMask::AttnMask(Eigen::Index r, Eigen::Index c, bool fill)
    : rows(r), cols(c), allow(size_t(r * c), fill ? 1 : 0) {}

AttnMask AttnMask::full(Eigen::Index rows, Eigen::Index cols) {
  AttnMask m(rows, cols, true);
  m.finalize();
  return m;
}

AttnMask AttnMask::causal(Eigen::Index n) {
  AttnMask m(n, n, false);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) m.set(i, j, true);
  m.finalize();
  return m;
}

void AttnMask::finalize() {
  if (rows <= 0 || cols <= 0 || Eigen::Index(allow.size()) != rows * cols)
    throw std::invalid_argument("mask: inconsistent dimensions");

  prefix_len.assign(size_t(rows), 0);
  is_prefix = true;
  for (Eigen::Index i = 0; i < rows; ++i) {
    Eigen::Index p = 0;
    while (p < cols && at(i, p)) ++p;
    Eigen::Index allowed = p;
    for (Eigen::Index j = p; j < cols; ++j)
      if (at(i, j)) ++allowed;
    if (allowed == 0)
      throw std::invalid_argument("mask: row " + std::to_string(i) + " allows no keys");
    if (allowed != p) is_prefix = false;
    prefix_len[size_t(i)] = p;
  }

  runs.clear();
  tiles.clear();
  if (!is_prefix) return;
  Eigen::Index begin = 0;
  for (Eigen::Index i = 1; i <= rows; ++i) {
    if (i == rows || prefix_len[size_t(i)] != prefix_len[size_t(begin)]) {
      runs.push_back({begin, i - begin, prefix_len[size_t(begin)]});
      begin = i;
    }
  }

  Eigen::Index min_run = rows;
  for (const Run& r : runs) min_run = std::min(min_run, r.row_count);

  if (min_run >= 32) {
    // Wide runs: tile within each run, so tiles stay pure.
    for (const Run& r : runs) {
      for (Eigen::Index off = 0; off < r.row_count; off += 128) {
        Eigen::Index rc = std::min<Eigen::Index>(128, r.row_count - off);
        tiles.push_back({r.row_begin + off, rc, r.prefix, true});
      }
    }
  } else {
    // Narrow runs (e.g. causal): fixed row tiles, per-row tail re-masked.
    for (Eigen::Index off = 0; off < rows; off += 64) {
      Eigen::Index rc = std::min<Eigen::Index>(64, rows - off);
      Eigen::Index p = 0;
      bool pure = true;
      for (Eigen::Index i = off; i < off + rc; ++i) {
        p = std::max(p, prefix_len[size_t(i)]);
        pure = pure && prefix_len[size_t(i)] == prefix_len[size_t(off)];
      }
      tiles.push_back({off, rc, p, pure});
    }
  }
}

MaskPtr finalized(AttnMask m) {
  m.finalize();
  return std::make_shared<const AttnMask>(std::move(m));
}

}  // namespace jepa
