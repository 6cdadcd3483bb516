#include "dfs/curve.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace dfs {

const char* ordering_name(Ordering o) {
  switch (o) {
    case Ordering::kRaster: return "raster";
    case Ordering::kHilbert2d: return "hilbert2d";
    case Ordering::kBlock3d: return "block3d";
    case Ordering::kHilbert3d: return "hilbert3d";
  }
  throw std::invalid_argument("unknown ordering");
}

Ordering parse_ordering(const std::string& name) {
  if (name == "raster") return Ordering::kRaster;
  if (name == "hilbert2d") return Ordering::kHilbert2d;
  if (name == "block3d") return Ordering::kBlock3d;
  if (name == "hilbert3d") return Ordering::kHilbert3d;
  throw std::invalid_argument("unknown ordering: " + name);
}

void validate_permutation(const std::vector<uint32_t>& forward) {
  const size_t n = forward.size();
  if (n == 0) throw std::invalid_argument("permutation: empty");
  std::vector<bool> seen(n, false);
  for (uint32_t v : forward) {
    if (v >= n || seen[v]) throw std::invalid_argument("permutation: not a bijection");
    seen[v] = true;
  }
}

namespace {

int bits_for(int64_t extent) {
  int bits = 0;
  while ((int64_t{1} << bits) < extent) ++bits;
  return bits;
}

// Skilling's transpose-to-axes transform ("Programming the Hilbert
// curve", AIP Conf. Proc. 707, 2004). The index bits are first dealt
// round-robin across axes, most significant group first, then the Gray
// code and per-level rotations are undone in place. Index 0 maps to the
// origin and consecutive indices are lattice neighbors.
template <int NDims>
std::array<uint32_t, NDims> hilbert_axes(uint64_t index, int bits) {
  std::array<uint32_t, NDims> x{};
  if (bits == 0) return x;
  for (int level = 0; level < bits; ++level) {
    const uint64_t group = index >> ((bits - 1 - level) * NDims);
    for (int axis = 0; axis < NDims; ++axis) {
      const uint64_t bit = (group >> (NDims - 1 - axis)) & 1u;
      x[axis] |= static_cast<uint32_t>(bit) << (bits - 1 - level);
    }
  }

  // Gray decode
  uint32_t t = x[NDims - 1] >> 1;
  for (int axis = NDims - 1; axis > 0; --axis) x[axis] ^= x[axis - 1];
  x[0] ^= t;

  // undo excess rotations/reflections level by level
  for (uint32_t q = 2; q != (uint32_t{1} << bits); q <<= 1) {
    const uint32_t p = q - 1;
    for (int axis = NDims - 1; axis >= 0; --axis) {
      if (x[axis] & q) {
        x[0] ^= p;
      } else {
        const uint32_t swap = (x[0] ^ x[axis]) & p;
        x[0] ^= swap;
        x[axis] ^= swap;
      }
    }
  }
  return x;
}

}  // namespace

Permutation raster_order(const GridDims& dims) {
  dims.validate();
  Permutation perm;
  perm.label = Ordering::kRaster;
  const int64_t n = dims.token_count();
  perm.forward.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) perm.forward[static_cast<size_t>(i)] = static_cast<uint32_t>(i);
  return perm;
}

Permutation hilbert3d_order(const GridDims& dims) {
  dims.validate();
  Permutation perm;
  perm.label = Ordering::kHilbert3d;
  perm.forward.reserve(static_cast<size_t>(dims.token_count()));

  int64_t side = std::max(dims.frames, std::max(dims.height, dims.width));
  const int bits = bits_for(side);
  side = int64_t{1} << bits;
  const int64_t cells = side * side * side;
  for (int64_t d = 0; d < cells; ++d) {
    const auto a = hilbert_axes<3>(static_cast<uint64_t>(d), bits);
    const int64_t t = a[0], y = a[1], x = a[2];
    if (t < dims.frames && y < dims.height && x < dims.width)
      perm.forward.push_back(static_cast<uint32_t>(dims.raster_index(t, y, x)));
  }
  return perm;
}

Permutation hilbert2d_order(const GridDims& dims) {
  dims.validate();
  Permutation perm;
  perm.label = Ordering::kHilbert2d;
  perm.forward.reserve(static_cast<size_t>(dims.token_count()));

  int64_t side = std::max(dims.height, dims.width);
  const int bits = bits_for(side);
  side = int64_t{1} << bits;
  const int64_t cells = side * side;
  for (int64_t t = 0; t < dims.frames; ++t) {
    for (int64_t d = 0; d < cells; ++d) {
      const auto a = hilbert_axes<2>(static_cast<uint64_t>(d), bits);
      const int64_t y = a[0], x = a[1];
      if (y < dims.height && x < dims.width)
        perm.forward.push_back(static_cast<uint32_t>(dims.raster_index(t, y, x)));
    }
  }
  return perm;
}

Permutation block3d_order(const GridDims& dims) {
  dims.validate();
  constexpr int64_t kCube = 4;
  Permutation perm;
  perm.label = Ordering::kBlock3d;
  perm.forward.reserve(static_cast<size_t>(dims.token_count()));

  for (int64_t ct = 0; ct < dims.frames; ct += kCube)
    for (int64_t cy = 0; cy < dims.height; cy += kCube)
      for (int64_t cx = 0; cx < dims.width; cx += kCube) {
        const int64_t tmax = std::min(ct + kCube, dims.frames);
        const int64_t ymax = std::min(cy + kCube, dims.height);
        const int64_t xmax = std::min(cx + kCube, dims.width);
        for (int64_t t = ct; t < tmax; ++t)
          for (int64_t y = cy; y < ymax; ++y)
            for (int64_t x = cx; x < xmax; ++x)
              perm.forward.push_back(static_cast<uint32_t>(dims.raster_index(t, y, x)));
      }
  return perm;
}

Permutation order_tokens(Ordering ordering, const GridDims& dims) {
  switch (ordering) {
    case Ordering::kRaster: return raster_order(dims);
    case Ordering::kHilbert2d: return hilbert2d_order(dims);
    case Ordering::kBlock3d: return block3d_order(dims);
    case Ordering::kHilbert3d: return hilbert3d_order(dims);
  }
  throw std::invalid_argument("unknown ordering");
}

Matrix apply_permutation(const Permutation& perm, const Matrix& x) {
  if (perm.size() != x.rows())
    throw std::invalid_argument("apply_permutation: length mismatch");
  Matrix out(x.rows(), x.cols());
  for (int64_t i = 0; i < x.rows(); ++i) {
    const auto src = x.row(perm.forward[static_cast<size_t>(i)]);
    auto dst = out.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

Permutation invert_permutation(const Permutation& perm) {
  Permutation inv;
  inv.label = perm.label;
  inv.forward.resize(perm.forward.size());
  for (size_t i = 0; i < perm.forward.size(); ++i)
    inv.forward[perm.forward[i]] = static_cast<uint32_t>(i);
  return inv;
}

}  // namespace dfs
