// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "ddnet/image.hpp"

namespace ddnet {

/// One training unit: a low/normal pair and the LoG maps of both.
struct PairedSample {
  Image low;
  Image normal;
  GradientMap grad_in;  // LoG of low
  GradientMap grad_gt;  // LoG of normal
  std::string id;
};

}  // namespace ddnet
