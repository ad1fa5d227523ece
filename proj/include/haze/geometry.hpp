#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "haze/image.hpp"

namespace haze {

/// Zero-skew pinhole intrinsics. fx/fy/cx/cy are in pixels.
struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0))
            throw std::invalid_argument("CameraIntrinsics: focal lengths must be positive");
        if (!std::isfinite(cx) || !std::isfinite(cy))
            throw std::invalid_argument("CameraIntrinsics: principal point must be finite");
    }
};

/// Norm of the back-projected ray through the center of pixel (i, j) at
/// unit z. Pixel (i, j) samples the image-plane point (j + 0.5, i + 0.5).
inline double ray_norm(const CameraIntrinsics& k, int i, int j) {
    const double x = (j + 0.5 - k.cx) / k.fx;
    const double y = (i + 0.5 - k.cy) / k.fy;
    return std::sqrt(x * x + y * y + 1.0);
}

/// Z-depth to Euclidean camera-to-point distance: R = D * |K^-1 p|.
/// The ray norm is >= 1, so R >= D everywhere, with equality on the ray
/// through the principal point.
inline ScalarField depth_to_range(const ScalarField& depth, const CameraIntrinsics& k) {
    k.validate();
    require_nonempty(depth.height, depth.width, "depth_to_range");
    require_finite(depth, "depth_to_range");
    require_nonnegative(depth, "depth_to_range");

    ScalarField range(depth.height, depth.width);
    for (int i = 0; i < depth.height; ++i)
        for (int j = 0; j < depth.width; ++j)
            range.at(i, j) = depth.at(i, j) * ray_norm(k, i, j);
    return range;
}

/// Inverse of depth_to_range: D = R / |K^-1 p|.
inline ScalarField range_to_depth(const ScalarField& range, const CameraIntrinsics& k) {
    k.validate();
    require_nonempty(range.height, range.width, "range_to_depth");
    require_finite(range, "range_to_depth");
    require_nonnegative(range, "range_to_depth");

    ScalarField depth(range.height, range.width);
    for (int i = 0; i < range.height; ++i)
        for (int j = 0; j < range.width; ++j)
            depth.at(i, j) = range.at(i, j) / ray_norm(k, i, j);
    return depth;
}

}  // namespace haze
