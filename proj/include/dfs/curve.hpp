#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfs/grid.hpp"
#include "dfs/tensor.hpp"

namespace dfs {

enum class Ordering { kRaster, kHilbert2d, kBlock3d, kHilbert3d };

const char* ordering_name(Ordering o);
Ordering parse_ordering(const std::string& name);

// Token reordering. forward[i] is the raster index of the token placed at
// reordered position i; forward is a bijection on [0, N).
struct Permutation {
  std::vector<uint32_t> forward;
  Ordering label = Ordering::kRaster;

  int64_t size() const { return static_cast<int64_t>(forward.size()); }
  friend bool operator==(const Permutation&, const Permutation&) = default;
};

// Throws if forward is not a bijection on [0, size).
void validate_permutation(const std::vector<uint32_t>& forward);

// Frame-major, row-major, column flattening: the identity ordering.
Permutation raster_order(const GridDims& dims);

// Global 3D Hilbert curve over the smallest enclosing power-of-two cube;
// cells outside dims are skipped, preserving curve order. Curve axes map
// to (frame, row, column) in that order and the curve starts at the
// lattice origin.
Permutation hilbert3d_order(const GridDims& dims);

// Per-frame 2D Hilbert curve over the smallest enclosing power-of-two
// square; frames concatenated in temporal order.
Permutation hilbert2d_order(const GridDims& dims);

// Lattice tiled by 4x4x4 cubes (partial cubes at the boundary keep their
// actual extent), cubes in raster order, cells inside each cube in local
// raster order.
Permutation block3d_order(const GridDims& dims);

Permutation order_tokens(Ordering ordering, const GridDims& dims);

// Row i of the result is row forward[i] of x.
Matrix apply_permutation(const Permutation& perm, const Matrix& x);

// inverse.forward[perm.forward[i]] == i.
Permutation invert_permutation(const Permutation& perm);

}  // namespace dfs
