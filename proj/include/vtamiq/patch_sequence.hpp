#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "vtamiq/errors.hpp"
#include "vtamiq/tensor.hpp"

namespace vtamiq {

/// Normalised patch-centre position: u along rows, v along columns, both in [0, 1].
struct UV {
  double u = 0.0;
  double v = 0.0;
  friend bool operator==(const UV&, const UV&) = default;
};

/// Top-left pixel of a patch window.
struct PatchOrigin {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const PatchOrigin&, const PatchOrigin&) = default;
};

/// N square RGB patches cut from one image, with their positions.
template <typename T>
struct PatchSequence {
  Tensor<T> patches;  // [N, p, p, 3]
  std::vector<UV> uv;
  std::vector<PatchOrigin> origins;
  std::size_t height = 0;  // source image size
  std::size_t width = 0;

  std::size_t count() const noexcept { return uv.size(); }
  std::size_t patch_size() const { return patches.dim(1); }
};

inline UV patch_center_uv(PatchOrigin o, std::size_t patch, std::size_t height, std::size_t width) {
  return UV{(static_cast<double>(o.row) + 0.5 * static_cast<double>(patch)) / static_cast<double>(height),
            (static_cast<double>(o.col) + 0.5 * static_cast<double>(patch)) / static_cast<double>(width)};
}

/// Cuts the windows at `origins` out of an [H, W, 3] image.
template <typename T>
PatchSequence<T> extract_patches(const Tensor<T>& image, std::size_t patch, const std::vector<PatchOrigin>& origins) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("expected an [H,W,3] image, got " + shape_string(image.shape()));
  }
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (patch == 0 || patch > h || patch > w) {
    throw ConfigError("patch size " + std::to_string(patch) + " does not fit a " + std::to_string(h) + "x" +
                      std::to_string(w) + " image");
  }
  if (origins.empty()) throw ContractError("at least one patch is required");
  PatchSequence<T> seq;
  seq.patches = Tensor<T>(Shape{origins.size(), patch, patch, 3});
  seq.height = h;
  seq.width = w;
  seq.origins = origins;
  seq.uv.reserve(origins.size());
  T* out = seq.patches.data();
  for (const auto& o : origins) {
    if (o.row + patch > h || o.col + patch > w) throw ContractError("patch window leaves the image");
    for (std::size_t r = 0; r < patch; ++r) {
      const T* src = image.data() + ((o.row + r) * w + o.col) * 3;
      out = std::copy_n(src, patch * 3, out);
    }
    seq.uv.push_back(patch_center_uv(o, patch, h, w));
  }
  return seq;
}

}  // namespace vtamiq
