// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctta/tensor.hpp"

namespace ctta {

std::string sha256_hex(std::string_view bytes);
/// SHA-256 over the raw little-endian bytes of each tensor's values, in order.
std::string sha256_tensors(std::span<const ad::Tensor> tensors);

}  // namespace ctta
