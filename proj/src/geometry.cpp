#include "egghand/geometry.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <string>

#include "egghand/error.hpp"

namespace egghand {

PoseSequence PoseSequence::range(int begin, int end) const {
    require(0 <= begin && begin <= end && end <= frames, "pose range out of bounds");
    PoseSequence out;
    out.frames = end - begin;
    out.xyz.assign(xyz.begin() + static_cast<std::ptrdiff_t>(offset(begin, 0)),
                   xyz.begin() + static_cast<std::ptrdiff_t>(offset(end, 0)));
    out.valid.assign(valid.begin() + static_cast<std::ptrdiff_t>(begin) * kJoints,
                     valid.begin() + static_cast<std::ptrdiff_t>(end) * kJoints);
    return out;
}

}  // namespace egghand

namespace egghand::geometry {

RigidTransform RigidTransform::from_matrix34(std::span<const double, 12> rt, double tolerance) {
    RigidTransform out;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) out.rotation(r, c) = rt[static_cast<std::size_t>(r * 4 + c)];
        out.translation(r) = rt[static_cast<std::size_t>(r * 4 + 3)];
    }
    if (!out.rotation.allFinite() || !out.translation.allFinite())
        fail(ErrorKind::Validation, "extrinsic contains non-finite values");
    if (!out.is_valid(tolerance))
        fail(ErrorKind::Validation, "extrinsic rotation is not orthonormal");
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(out.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    out.rotation = svd.matrixU() * svd.matrixV().transpose();
    return out;
}

std::array<double, 12> RigidTransform::to_matrix34() const {
    std::array<double, 12> rt{};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) rt[static_cast<std::size_t>(r * 4 + c)] = rotation(r, c);
        rt[static_cast<std::size_t>(r * 4 + 3)] = translation(r);
    }
    return rt;
}

bool RigidTransform::is_valid(double tol) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

void RigidTransform::validate(double tol) const {
    if (!is_valid(tol)) fail(ErrorKind::Validation, "rigid transform is not a proper rotation");
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
}

RigidTransform RigidTransform::inverse() const {
    const Eigen::Matrix3d rt = rotation.transpose();
    return {rt, -(rt * translation)};
}

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(cx) || !std::isfinite(cy))
        fail(ErrorKind::Validation, "camera intrinsics need positive focal lengths");
}

Points se3_apply(const RigidTransform& pose, const Points& points) {
    if (!points.allFinite()) fail(ErrorKind::Validation, "se3_apply: non-finite input point");
    Points out(points.rows(), 3);
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        out.row(i) = pose.apply(points.row(i).transpose()).transpose();
    return out;
}

RigidTransform se3_inverse(const RigidTransform& pose) {
    pose.validate();
    return pose.inverse();
}

double geodesic_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    const double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
    return std::acos(std::clamp(c, -1.0, 1.0));
}

Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double angle) {
    return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Eigen::Vector3d canonical_heading(const Eigen::Vector3d& up) {
    const Eigen::Vector3d u = up.normalized();
    for (int k = 0; k < 3; ++k) {
        const Eigen::Vector3d e = Eigen::Vector3d::Unit(k);
        if (std::abs(e.dot(u)) < 0.9) return (e - e.dot(u) * u).normalized();
    }
    return Eigen::Vector3d::UnitX();  // unreachable for a unit up vector
}

RigidTransform anchor_transform(const RigidTransform& anchor, const CanonicalOptions& options,
                                bool* degenerate_yaw) {
    if (degenerate_yaw) *degenerate_yaw = false;
    if (options.mode == CanonicalMode::FullCamera) return anchor;

    const double up_norm = options.up_axis.norm();
    if (!(up_norm > 0.0) || !std::isfinite(up_norm)) fail(ErrorKind::Validation, "up axis must be non-zero");
    const Eigen::Vector3d up = options.up_axis / up_norm;
    const Eigen::Vector3d center = -(anchor.rotation.transpose() * anchor.translation);
    const Eigen::Vector3d forward = anchor.rotation.row(2).transpose();
    const Eigen::Vector3d horizontal = forward - forward.dot(up) * up;

    Eigen::Matrix3d yaw = Eigen::Matrix3d::Identity();
    if (horizontal.norm() < 1e-6) {
        if (degenerate_yaw) *degenerate_yaw = true;
    } else {
        const Eigen::Vector3d f = horizontal.normalized();
        const Eigen::Vector3d h = canonical_heading(up);
        yaw = axis_angle(up, std::atan2(up.dot(f.cross(h)), f.dot(h)));
    }
    return {yaw, -(yaw * center)};
}

CanonicalClip canonicalize_clip(const PoseSequence& world_poses, std::span<const RigidTransform> extrinsics,
                                const CanonicalOptions& options) {
    require(world_poses.frames >= 1, "canonicalize_clip: need at least one frame");
    require(extrinsics.size() == static_cast<std::size_t>(world_poses.frames),
            "canonicalize_clip: extrinsics count " + std::to_string(extrinsics.size()) +
                " does not match frame count " + std::to_string(world_poses.frames));
    extrinsics[0].validate();

    CanonicalClip out;
    out.world_to_canonical = anchor_transform(extrinsics[0], options, &out.degenerate_yaw);
    out.poses = world_poses;
    for (int t = 0; t < world_poses.frames; ++t)
        for (int j = 0; j < kJoints; ++j) out.poses.joint(t, j) = out.world_to_canonical.apply(world_poses.joint(t, j));
    return out;
}

Projection project_to_image(const PoseSequence& poses, int frame, const CameraIntrinsics& intrinsics,
                            const RigidTransform& cam_from_anchor) {
    intrinsics.validate();
    require(frame >= 0 && frame < poses.frames, "project_to_image: frame out of range");
    Projection out;
    for (int j = 0; j < kJoints; ++j) {
        out.pixels[static_cast<std::size_t>(j)] = Eigen::Vector2d::Constant(std::nan(""));
        if (!poses.is_valid(frame, j)) continue;
        const Eigen::Vector3d p = cam_from_anchor.apply(poses.joint(frame, j));
        if (!(p.z() > 1e-6)) continue;
        out.in_front[static_cast<std::size_t>(j)] = true;
        out.pixels[static_cast<std::size_t>(j)] = {intrinsics.fx * p.x() / p.z() + intrinsics.cx,
                                                   intrinsics.fy * p.y() / p.z() + intrinsics.cy};
    }
    return out;
}

double egomotion_score(std::span<const RigidTransform> extrinsics, double alpha) {
    double score = 0.0;
    for (std::size_t t = 1; t < extrinsics.size(); ++t) {
        score += (extrinsics[t].translation - extrinsics[t - 1].translation).norm();
        score += alpha * geodesic_angle(extrinsics[t].rotation, extrinsics[t - 1].rotation);
    }
    return score;
}

}  // namespace egghand::geometry
