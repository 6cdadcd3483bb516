#include "dfs/io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dfs {

namespace {

void put_u32le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string name)
      : bytes_(bytes), name_(std::move(name)) {}

  uint32_t u32le() {
    if (pos_ + 4 > bytes_.size()) fail("truncated");
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | static_cast<uint8_t>(bytes_[pos_ + static_cast<size_t>(i)]);
    pos_ += 4;
    return v;
  }

  void raw(void* dst, size_t n) {
    if (pos_ + n > bytes_.size()) fail("truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  void expect_magic(std::string_view magic) {
    if (bytes_.size() < magic.size() || bytes_.substr(0, magic.size()) != magic)
      fail("bad magic");
    pos_ = magic.size();
  }

  void expect_end() {
    if (pos_ != bytes_.size()) fail("trailing bytes");
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw std::runtime_error(name_ + ": " + why);
  }

 private:
  std::string_view bytes_;
  std::string name_;
  size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::string out;
  out.reserve(24 + static_cast<size_t>(m.size()) * 4);
  out += "DFST";
  put_u32le(out, 1);  // version
  put_u32le(out, 2);  // rank
  put_u32le(out, static_cast<uint32_t>(m.rows()));
  put_u32le(out, static_cast<uint32_t>(m.cols()));
  for (float v : m.values()) put_u32le(out, std::bit_cast<uint32_t>(v));
  write_file_atomic(path, out);
}

Matrix load_matrix(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, "DFST " + path.string());
  r.expect_magic("DFST");
  if (r.u32le() != 1) r.fail("unsupported version");
  if (r.u32le() != 2) r.fail("unsupported rank");
  const uint32_t rows = r.u32le();
  const uint32_t cols = r.u32le();
  if (rows == 0 || cols == 0) r.fail("zero dimension");
  Matrix m(rows, cols);
  for (float& v : m.values()) v = std::bit_cast<float>(r.u32le());
  r.expect_end();
  return m;
}

void save_block_mask(const std::filesystem::path& path, const BlockMask& mask) {
  std::string out;
  out += "DFSM";
  put_u32le(out, 1);
  put_u32le(out, static_cast<uint32_t>(mask.block_count()));
  put_u32le(out, static_cast<uint32_t>(mask.block_size()));
  const auto bytes = mask.bytes();
  out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  write_file_atomic(path, out);
}

BlockMask load_block_mask(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, "DFSM " + path.string());
  r.expect_magic("DFSM");
  if (r.u32le() != 1) r.fail("unsupported version");
  const uint32_t m = r.u32le();
  const uint32_t b = r.u32le();
  if (m == 0 || b == 0) r.fail("zero geometry");
  BlockMask mask(m, b);
  r.raw(mask.bytes().data(), mask.bytes().size());
  r.expect_end();
  // trailing padding bits inside the final byte must be zero
  BlockMask canonical(m, b);
  for (int64_t u = 0; u < mask.block_count(); ++u)
    for (int64_t v = 0; v < mask.block_count(); ++v) canonical.set(u, v, mask.get(u, v));
  if (!(canonical == mask)) r.fail("nonzero padding bits");
  return canonical;
}

void save_permutation(const std::filesystem::path& path, const Permutation& perm) {
  std::string out;
  for (uint32_t idx : perm.forward) {
    out += std::to_string(idx);
    out += '\n';
  }
  write_file_atomic(path, out);
}

Permutation load_permutation(const std::filesystem::path& path, Ordering label) {
  const std::string bytes = read_file(path);
  Permutation perm;
  perm.label = label;
  size_t pos = 0;
  while (pos < bytes.size()) {
    size_t eol = bytes.find('\n', pos);
    if (eol == std::string::npos)
      throw std::runtime_error("permutation " + path.string() + ": missing final newline");
    const std::string_view line(bytes.data() + pos, eol - pos);
    uint32_t value = 0;
    const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), value);
    if (ec != std::errc{} || ptr != line.data() + line.size())
      throw std::runtime_error("permutation " + path.string() + ": bad line '" +
                               std::string(line) + "'");
    perm.forward.push_back(value);
    pos = eol + 1;
  }
  try {
    validate_permutation(perm.forward);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("permutation " + path.string() + ": " + e.what());
  }
  return perm;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt_int(int64_t v) { return std::to_string(v); }

void save_scores_csv(const std::filesystem::path& path, const MatrixD& scores) {
  CsvWriter csv({"u", "v", "score"});
  for (int64_t u = 0; u < scores.rows(); ++u)
    for (int64_t v = 0; v < scores.cols(); ++v)
      csv.add_row({fmt_int(u), fmt_int(v), fmt_double(scores.at(u, v))});
  csv.write(path);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvWriter::add_row(std::vector<std::string> fields) {
  if (fields.size() != header_.size())
    throw std::invalid_argument("CsvWriter: row width does not match header");
  rows_.push_back(std::move(fields));
}

namespace {
void append_csv_line(std::string& out, const std::vector<std::string>& fields) {
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n") != std::string::npos) {
      out += '"';
      for (char c : f) {
        if (c == '"') out += '"';
        out += c;
      }
      out += '"';
    } else {
      out += f;
    }
  }
  out += '\n';
}
}  // namespace

std::string CsvWriter::str() const {
  std::string out;
  append_csv_line(out, header_);
  for (const auto& row : rows_) append_csv_line(out, row);
  return out;
}

void CsvWriter::write(const std::filesystem::path& path) const {
  write_file_atomic(path, str());
}

}  // namespace dfs
