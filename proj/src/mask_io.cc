// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mcse/mask.h"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mcse {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

void write_mask(const std::string& path, const MaskFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write mask file: " + path);
  out << "MCSEMASK 1 " << file.mask.rows() << ' ' << file.mask.cols() << ' ' << file.window_size
      << ' ' << file.hop_size << '\n';
  for (Eigen::Index f = 0; f < file.mask.rows(); ++f)
    for (Eigen::Index t = 0; t < file.mask.cols(); ++t) {
      const double v = file.mask(f, t);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  if (!out) throw std::runtime_error("failed writing mask file: " + path);
}

MaskFile read_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open mask file: " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic;
  int version = 0;
  long rows = -1, cols = -1;
  MaskFile file;
  hs >> magic >> version >> rows >> cols >> file.window_size >> file.hop_size;
  if (!hs || magic != "MCSEMASK" || version != 1 || rows < 0 || cols < 0)
    throw std::runtime_error("bad mask header in " + path);
  file.mask.resize(rows, cols);
  for (long f = 0; f < rows; ++f)
    for (long t = 0; t < cols; ++t) {
      double v;
      if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw std::runtime_error("truncated mask file: " + path);
      file.mask(f, t) = v;
    }
  return file;
}

bool is_valid_mask(const Mask& mask) {
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const double v = mask.data()[i];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) return false;
  }
  return true;
}

}  // namespace mcse
