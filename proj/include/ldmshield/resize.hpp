#pragma once

#include "ldmshield/image.hpp"

namespace ldms {

// Separable bicubic (Catmull-Rom, a = -0.5) resampling with edge clamping.
Image resize_bicubic(const Image& img, int out_h, int out_w);

}  // namespace ldms
