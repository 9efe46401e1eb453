#pragma once

#include <Eigen/Core>

namespace beamcast::pipeline {

/// Planar RGB image, [3 x height x width] row-major.
struct Image {
    int height = 0;
    int width = 0;
    Eigen::ArrayXf pixels;

    Image() = default;
    Image(int h, int w, float fill = 0.0f) : height(h), width(w), pixels(Eigen::ArrayXf::Constant(3L * h * w, fill)) {}

    static constexpr int channels = 3;

    float& at(int c, int y, int x) { return pixels[(static_cast<Eigen::Index>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return pixels[(static_cast<Eigen::Index>(c) * height + y) * width + x]; }

    auto plane(int c) { return pixels.segment(static_cast<Eigen::Index>(c) * height * width, height * width); }
    auto plane(int c) const { return pixels.segment(static_cast<Eigen::Index>(c) * height * width, height * width); }

    bool operator==(const Image& other) const
    {
        return height == other.height && width == other.width && (pixels == other.pixels).all();
    }
};

} // namespace beamcast::pipeline
