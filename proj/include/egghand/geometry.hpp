#pragma once

#include <Eigen/Core>
#include <array>
#include <span>
#include <vector>

#include "egghand/pose.hpp"

namespace egghand::geometry {

/// World-to-camera rigid transform: p_cam = R p_world + t.
struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static RigidTransform identity() { return {}; }
    /// Row-major [R|t] 3x4. The rotation block is projected onto SO(3) when it is
    /// within `tolerance` of orthonormal (binary32 storage), otherwise rejected.
    static RigidTransform from_matrix34(std::span<const double, 12> rt, double tolerance = 1e-4);
    std::array<double, 12> to_matrix34() const;

    /// Throws a validation error unless R^T R = I and det R = 1 within tol.
    void validate(double tol = 1e-9) const;
    bool is_valid(double tol = 1e-9) const;

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
    /// this o other: apply other first.
    RigidTransform compose(const RigidTransform& other) const;
    RigidTransform inverse() const;
};

struct CameraIntrinsics {
    double fx = 150.0;
    double fy = 150.0;
    double cx = 112.0;
    double cy = 112.0;

    void validate() const;
};

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

Points se3_apply(const RigidTransform& pose, const Points& points);
RigidTransform se3_inverse(const RigidTransform& pose);

/// Geodesic angle between two rotations, radians.
double geodesic_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

/// Rotation about a unit axis (Rodrigues).
Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double angle);

enum class CanonicalMode { FullCamera, YawOnly };

struct CanonicalOptions {
    CanonicalMode mode = CanonicalMode::YawOnly;
    Eigen::Vector3d up_axis = Eigen::Vector3d::UnitZ();
};

struct CanonicalClip {
    PoseSequence poses;
    /// World-to-canonical transform built from the anchor frame.
    RigidTransform world_to_canonical;
    /// Camera forward was parallel to the up axis; yaw fell back to zero.
    bool degenerate_yaw = false;
};

/// Fixed horizontal reference heading for yaw_only mode: the first of +X, +Y, +Z
/// whose |dot| with up is below 0.9, made orthogonal to up.
Eigen::Vector3d canonical_heading(const Eigen::Vector3d& up);

/// World-to-canonical transform anchored at one camera pose.
/// full_camera: the camera transform itself.
/// yaw_only: translate the camera center to the origin, then rotate about up so
/// the horizontal projection of the camera forward axis (+z_cam) aligns with
/// canonical_heading(up).
RigidTransform anchor_transform(const RigidTransform& anchor_extrinsic, const CanonicalOptions& options,
                                bool* degenerate_yaw = nullptr);

/// Expresses every frame in the canonical frame anchored at extrinsics[0].
/// Invalid joints keep their coordinates transformed but stay flagged invalid.
CanonicalClip canonicalize_clip(const PoseSequence& world_poses, std::span<const RigidTransform> extrinsics,
                                const CanonicalOptions& options = {});

struct Projection {
    std::array<Eigen::Vector2d, kJoints> pixels;
    std::array<bool, kJoints> in_front{};
};

/// Pinhole projection of one frame (joints in the anchor/canonical frame).
Projection project_to_image(const PoseSequence& poses, int frame, const CameraIntrinsics& intrinsics,
                            const RigidTransform& cam_from_anchor);

/// Sum over consecutive frames of |t_t - t_{t-1}| + alpha * angle(R_t, R_{t-1}).
double egomotion_score(std::span<const RigidTransform> extrinsics, double alpha = 1.0);

}  // namespace egghand::geometry
