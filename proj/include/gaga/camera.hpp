#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gaga {

/// Camera-to-world rigid motion.
struct RigidTransform {
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    [[nodiscard]] Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
    [[nodiscard]] RigidTransform inverse() const;
    /// (this * other)(p) == this(other(p))
    [[nodiscard]] RigidTransform operator*(const RigidTransform& other) const;
};

/// Pinhole camera, OpenCV axes (x right, y down, z forward). Pixel (i, j)
/// samples the continuous image coordinate (i, j).
struct Camera {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
    int width = 1, height = 1;
    RigidTransform pose;

    /// Throws std::invalid_argument on non-positive focal lengths, empty
    /// images or a rotation that is not unit-norm within 1e-9.
    void validate() const;

    [[nodiscard]] Eigen::Vector3d center() const { return pose.translation; }
    [[nodiscard]] Eigen::Vector3d view_direction() const { return pose.rotation * Eigen::Vector3d::UnitZ(); }
    [[nodiscard]] Eigen::Matrix3d world_to_camera_rotation() const {
        return pose.rotation.toRotationMatrix().transpose();
    }
    [[nodiscard]] Eigen::Vector3d world_to_camera(const Eigen::Vector3d& p) const {
        return pose.rotation.conjugate() * (p - pose.translation);
    }
};

/// Camera at `eye` looking at `target`; `up` is the world up direction.
[[nodiscard]] Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                             double fx, double fy, double cx, double cy, int width, int height);

/// Camera orbiting the world origin (+y up, yaw 0 on +z). Principal point at
/// the image centre, square pixels.
[[nodiscard]] Camera orbit_camera(double yaw_deg, double pitch_deg, double distance, double fov_deg, int width,
                                  int height);

/// Applies a world-space rigid motion to the camera pose.
[[nodiscard]] Camera transformed(const Camera& camera, const RigidTransform& motion);

struct Projection {
    double x = 0.0;
    double y = 0.0;
    double depth = 0.0;
    bool in_front = false;
};

[[nodiscard]] Projection project(const Camera& camera, const Eigen::Vector3d& world_point);
[[nodiscard]] Eigen::Vector3d unproject(const Camera& camera, double px, double py, double depth);

/// Plane through the world origin facing the camera. Grid point (i, j) for
/// i, j in [0, res) lives at row-major index j*res + i and equals
/// u_axis*s_i + v_axis*s_j with s uniform over [-extent, extent].
struct ImagePlane {
    Eigen::Vector3d origin_point = Eigen::Vector3d::Zero();
    Eigen::Vector3d u_axis = Eigen::Vector3d::UnitX();
    Eigen::Vector3d v_axis = Eigen::Vector3d::UnitY();
    Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
    double extent = 1.0;
    int grid_res = 2;
};

struct LiftingPlane {
    ImagePlane plane;
    std::vector<double> points;  // res*res*3

    [[nodiscard]] int res() const noexcept { return plane.grid_res; }
};

[[nodiscard]] LiftingPlane plane_through_origin(const Camera& camera, int grid_res, double extent = 1.0);

}  // namespace gaga
