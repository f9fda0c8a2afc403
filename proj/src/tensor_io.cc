// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mcse/tensor_io.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace mcse {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

class Reader {
 public:
  Reader(std::vector<char> buf, std::string path) : buf_(std::move(buf)), path_(std::move(path)) {}

  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4), 4);
    return v;
  }
  double f64() {
    double v;
    std::memcpy(&v, take(8), 8);
    return v;
  }
  std::string str(std::size_t n) { return std::string(take(n), n); }
  bool done() const { return pos_ == buf_.size(); }

 private:
  const char* take(std::size_t n) {
    if (pos_ + n > buf_.size()) throw std::runtime_error("truncated tensor file: " + path_);
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::vector<char> buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

const Eigen::MatrixXd& TensorFile::at(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw std::runtime_error("tensor not found: " + name);
}

bool TensorFile::contains(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

void write_tensor_file(const std::string& path, const TensorFile& file) {
  std::ostringstream manifest;
  for (const auto& [k, v] : file.manifest) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw std::invalid_argument("manifest entries may not contain '=' in keys or newlines");
    manifest << k << '=' << v << '\n';
  }
  const std::string text = manifest.str();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write tensor file: " + path);
  out.write("MCSETNSR", 8);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_u32(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.value.rows()));
    put_u32(out, static_cast<std::uint32_t>(t.value.cols()));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
        const double v = t.value(r, c);
        out.write(reinterpret_cast<const char*>(&v), 8);
      }
  }
  if (!out) throw std::runtime_error("failed writing tensor file: " + path);
}

TensorFile read_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open tensor file: " + path);
  Reader r(std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()), path);
  if (r.str(8) != "MCSETNSR") throw std::runtime_error("not a tensor file: " + path);
  if (r.u32() != 1) throw std::runtime_error("unsupported tensor file version: " + path);

  TensorFile file;
  std::istringstream manifest(r.str(r.u32()));
  for (std::string line; std::getline(manifest, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("bad manifest line in " + path + ": " + line);
    file.manifest[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.u32());
    const std::uint32_t rows = r.u32(), cols = r.u32();
    t.value.resize(rows, cols);
    for (std::uint32_t a = 0; a < rows; ++a)
      for (std::uint32_t b = 0; b < cols; ++b) t.value(a, b) = r.f64();
    file.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw std::runtime_error("trailing bytes in tensor file: " + path);
  return file;
}

}  // namespace mcse
