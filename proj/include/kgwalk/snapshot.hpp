#pragma once

#include <string>
#include <utility>
#include <vector>

#include "kgwalk/nn.hpp"

namespace kgwalk::snapshot {

using TensorList = std::vector<std::pair<std::string, nn::Matrix>>;

/// Versioned binary container for named tensors. Layout: 8-byte magic
/// "KGWSNP01", u32 tensor count, then per tensor u32 name length, name bytes,
/// u64 rows, u64 cols, rows*cols doubles in column-major order. Doubles are
/// written verbatim, so save/load round-trips bit-exactly.
void save(const std::string& path, const TensorList& tensors);
TensorList load(const std::string& path);

/// Lookup helper; throws DataError when the tensor is missing or, when
/// rows/cols are non-negative, has the wrong shape.
const nn::Matrix& require(const TensorList& tensors, const std::string& name, long rows = -1, long cols = -1);

}  // namespace kgwalk::snapshot
