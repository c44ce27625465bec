#include "gaga/camera.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gaga {

RigidTransform RigidTransform::inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.conjugate();
    inv.translation = -(inv.rotation * translation);
    return inv;
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
    RigidTransform out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
}

void Camera::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("camera focal lengths must be positive");
    if (width < 1 || height < 1) throw std::invalid_argument("camera image size must be at least 1x1");
    const double n = pose.rotation.coeffs().norm();
    if (!(std::abs(n - 1.0) <= 1e-9)) throw std::invalid_argument("camera rotation quaternion is not unit-norm");
    if (!pose.translation.allFinite()) throw std::invalid_argument("camera translation is not finite");
}

Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up, double fx,
               double fy, double cx, double cy, int width, int height) {
    const Eigen::Vector3d z = (target - eye).normalized();
    Eigen::Vector3d x = z.cross(up);
    if (x.norm() < 1e-12) x = z.unitOrthogonal();
    x.normalize();
    const Eigen::Vector3d y = z.cross(x);
    Eigen::Matrix3d r;
    r.col(0) = x;
    r.col(1) = y;
    r.col(2) = z;
    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = cx;
    cam.cy = cy;
    cam.width = width;
    cam.height = height;
    cam.pose.rotation = Eigen::Quaterniond(r).normalized();
    cam.pose.translation = eye;
    return cam;
}

Camera orbit_camera(double yaw_deg, double pitch_deg, double distance, double fov_deg, int width, int height) {
    const double yaw = yaw_deg * std::numbers::pi / 180.0;
    const double pitch = pitch_deg * std::numbers::pi / 180.0;
    const Eigen::Vector3d eye(distance * std::sin(yaw) * std::cos(pitch), distance * std::sin(pitch),
                              distance * std::cos(yaw) * std::cos(pitch));
    const double f = 0.5 * width / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
    return look_at(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitY(), f, f, 0.5 * (width - 1),
                   0.5 * (height - 1), width, height);
}

Camera transformed(const Camera& camera, const RigidTransform& motion) {
    Camera out = camera;
    out.pose = motion * camera.pose;
    return out;
}

Projection project(const Camera& camera, const Eigen::Vector3d& world_point) {
    const Eigen::Vector3d p = camera.world_to_camera(world_point);
    Projection out;
    out.depth = p.z();
    out.in_front = p.z() > 0.0;
    if (p.z() != 0.0) {
        out.x = camera.fx * p.x() / p.z() + camera.cx;
        out.y = camera.fy * p.y() / p.z() + camera.cy;
    }
    return out;
}

Eigen::Vector3d unproject(const Camera& camera, double px, double py, double depth) {
    const Eigen::Vector3d p((px - camera.cx) / camera.fx * depth, (py - camera.cy) / camera.fy * depth, depth);
    return camera.pose.apply(p);
}

LiftingPlane plane_through_origin(const Camera& camera, int grid_res, double extent) {
    if (grid_res < 2) throw std::invalid_argument("grid_res must be at least 2");
    if (!(extent > 0.0)) throw std::invalid_argument("plane extent must be positive");
    if (camera.pose.rotation.coeffs().norm() < 1e-12)
        throw std::invalid_argument("degenerate camera: zero-norm rotation quaternion");
    const Eigen::Matrix3d r = camera.pose.rotation.normalized().toRotationMatrix();
    LiftingPlane out;
    out.plane.u_axis = r.col(0);
    out.plane.v_axis = r.col(1);
    out.plane.normal = -r.col(2);
    out.plane.extent = extent;
    out.plane.grid_res = grid_res;
    const auto n = static_cast<std::size_t>(grid_res);
    out.points.resize(n * n * 3);
    for (int j = 0; j < grid_res; ++j) {
        const double t = -extent + 2.0 * extent * j / (grid_res - 1);
        for (int i = 0; i < grid_res; ++i) {
            const double s = -extent + 2.0 * extent * i / (grid_res - 1);
            const Eigen::Vector3d p = out.plane.u_axis * s + out.plane.v_axis * t;
            const std::size_t idx = static_cast<std::size_t>(j) * n + static_cast<std::size_t>(i);
            out.points[idx * 3 + 0] = p.x();
            out.points[idx * 3 + 1] = p.y();
            out.points[idx * 3 + 2] = p.z();
        }
    }
    return out;
}

}  // namespace gaga
