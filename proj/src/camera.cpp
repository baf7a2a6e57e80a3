#include "gs4d/camera.hpp"

#include "gs4d/error.hpp"

#include <Eigen/Geometry>

namespace gs4d {

Mat4 Camera::world_to_camera() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
}

void Camera::set_world_to_camera(const Mat4& w2c) {
    rotation = w2c.topLeftCorner<3, 3>();
    translation = w2c.topRightCorner<3, 1>();
}

void Camera::validate() const {
    if (!rotation.allFinite() || !translation.allFinite()) {
        throw InvalidInput("camera pose is not finite");
    }
    const double err = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (err > 1e-9) throw InvalidInput("camera rotation is not orthonormal");
    if (!(near > 0.0) || !(far > near)) throw InvalidInput("camera requires 0 < near < far");
    if (width < 1 || height < 1) throw InvalidInput("camera image size must be at least 1x1");
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidInput("camera focal lengths must be positive");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
                       int width, int height) {
    const Vec3 forward = (target - eye).normalized();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    Camera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.width = width;
    cam.height = height;
    return cam;
}

} // namespace gs4d
