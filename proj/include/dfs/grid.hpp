#pragma once

#include <cstdint>
#include <stdexcept>

namespace dfs {

// Latent video lattice. Tokens are lattice cells flattened frame-major,
// then row-major: raster index = (t*height + y)*width + x.
struct GridDims {
  int64_t frames = 1;
  int64_t height = 1;
  int64_t width = 1;

  int64_t token_count() const { return frames * height * width; }

  int64_t raster_index(int64_t t, int64_t y, int64_t x) const {
    return (t * height + y) * width + x;
  }

  void validate() const {
    if (frames < 1 || height < 1 || width < 1)
      throw std::invalid_argument("GridDims: extents must be >= 1");
    // keep N inside int32 so permutations fit uint32 indices
    constexpr int64_t kMaxTokens = int64_t{1} << 31;
    if (frames > kMaxTokens / height / width)
      throw std::invalid_argument("GridDims: token count overflows index range");
  }

  friend bool operator==(const GridDims&, const GridDims&) = default;
};

}  // namespace dfs
