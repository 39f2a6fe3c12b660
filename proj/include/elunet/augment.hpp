#pragma once

#include <stdexcept>

#include "elunet/tensor.hpp"

namespace elunet {

// Zero-pads by `pad` on every side, crops a crop x crop window at
// (offset_y, offset_x) in the padded image, then optionally mirrors
// horizontally. Applies the same window to every image in the batch.
template <typename T>
Tensor4<T> pad_crop_flip(const Tensor4<T>& image, int pad, int crop, bool flip,
                         int offset_y, int offset_x) {
  const Shape4 s = image.shape();
  if (pad < 0 || crop < 1) throw std::invalid_argument("pad_crop_flip: bad pad/crop");
  const std::int64_t padded_h = s.h + 2 * pad, padded_w = s.w + 2 * pad;
  if (crop > padded_h || crop > padded_w)
    throw std::invalid_argument("pad_crop_flip: crop exceeds padded extent");
  if (offset_y < 0 || offset_x < 0 || offset_y + crop > padded_h ||
      offset_x + crop > padded_w)
    throw std::invalid_argument("pad_crop_flip: offset out of range");
  Tensor4<T> out({s.n, s.c, crop, crop});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t y = 0; y < crop; ++y) {
        const std::int64_t src_y = y + offset_y - pad;
        if (src_y < 0 || src_y >= s.h) continue;  // zero border
        for (std::int64_t x = 0; x < crop; ++x) {
          const std::int64_t src_x = (flip ? crop - 1 - x : x) + offset_x - pad;
          if (src_x < 0 || src_x >= s.w) continue;
          out.at(n, c, y, x) = image.at(n, c, src_y, src_x);
        }
      }
  return out;
}

}  // namespace elunet
