// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Named-tensor container.
//
// Layout (all integers little-endian uint32):
//   "MCSETNSR" | version=1 | manifest_bytes | manifest (UTF-8 key=value lines)
//   | tensor_count | per tensor: name_bytes | name | rows | cols
//   | rows*cols little-endian binary64 values, row-major
//
// Doubles are stored bit-for-bit, so a round trip is exact.

#ifndef MCSE_TENSOR_IO_H_
#define MCSE_TENSOR_IO_H_

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mcse {

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;
};

struct TensorFile {
  std::map<std::string, std::string> manifest;
  std::vector<NamedTensor> tensors;

  const Eigen::MatrixXd& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void write_tensor_file(const std::string& path, const TensorFile& file);
TensorFile read_tensor_file(const std::string& path);

}  // namespace mcse

#endif  // MCSE_TENSOR_IO_H_
