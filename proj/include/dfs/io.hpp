#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dfs/block_mask.hpp"
#include "dfs/curve.hpp"
#include "dfs/tensor.hpp"

namespace dfs {

// DFST tensor file: magic "DFST", u32 LE version=1, u32 LE rank=2, rank
// dims (u32 LE), then row-major binary32 LE payload.
//
// DFSM mask file: magic "DFSM", u32 LE version=1, M (u32 LE), B (u32 LE),
// then ceil(M*M/8) bytes of row-major bit-packed booleans, MSB first.
//
// Permutation text file: one decimal index per line, newline-terminated.
//
// All writers go through a temp file + rename, so an interrupted run
// never leaves a truncated file behind.

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

void save_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix load_matrix(const std::filesystem::path& path);

void save_block_mask(const std::filesystem::path& path, const BlockMask& mask);
BlockMask load_block_mask(const std::filesystem::path& path);

void save_permutation(const std::filesystem::path& path, const Permutation& perm);
// Strict load: every line must parse and the result must be a bijection.
Permutation load_permutation(const std::filesystem::path& path,
                             Ordering label = Ordering::kRaster);

// Block score matrix as CSV with header "u,v,score".
void save_scores_csv(const std::filesystem::path& path, const MatrixD& scores);

// Minimal RFC-4180 writer: header row, LF line endings, quoting only when
// a field needs it.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add_row(std::vector<std::string> fields);
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Number formatting used in every CSV: shortest round-trip-ish "%.9g" for
// doubles so reruns are byte-identical.
std::string fmt_double(double v);
std::string fmt_int(int64_t v);

}  // namespace dfs
