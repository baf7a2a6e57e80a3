#pragma once

#include "gs4d/math.hpp"

namespace gs4d {

/// Pinhole camera. Camera space follows the computer-vision convention:
/// +x right, +y down, +z forward; pixel (u, v) has coordinates (u, v).
struct Camera {
    Mat3 rotation = Mat3::Identity(); // world -> camera
    Vec3 translation = Vec3::Zero();  // world -> camera
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    double near = 0.01;
    double far = 100.0;

    Mat4 world_to_camera() const;
    void set_world_to_camera(const Mat4& w2c);

    /// Camera centre in world coordinates.
    Vec3 center() const { return -rotation.transpose() * translation; }

    /// Throws InvalidInput unless the rotation is orthonormal within 1e-9,
    /// 0 < near < far and the image is at least 1x1.
    void validate() const;

    /// Camera at `eye` looking at `target`, with `up` giving the world's up
    /// direction (image rows grow opposite to it).
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
                          int width, int height);
};

} // namespace gs4d
