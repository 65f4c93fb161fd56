#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace splatstream {

inline constexpr int kShRestPerChannel = 15;
inline constexpr int kShRestCount = 3 * kShRestPerChannel;
inline constexpr double kShC0 = 0.28209479177387814;

/// One splat in its stored (file) form. Values are kept exactly as read so
/// that export is bit-exact; activation happens in `activate`.
struct Gaussian {
    std::array<float, 3> position{};
    std::array<float, 3> normal{};
    std::array<float, 3> log_scale{};
    std::array<float, 4> rotation{1.0f, 0.0f, 0.0f, 0.0f}; // w, x, y, z
    float opacity_logit = 0.0f;
    std::array<float, 3> sh_dc{};
    // Channel-major: 15 coefficients for R, then G, then B.
    std::array<float, kShRestCount> sh_rest{};

    friend bool operator==(const Gaussian&, const Gaussian&) = default;
};

static_assert(sizeof(Gaussian) == 62 * sizeof(float), "Gaussian must be tightly packed floats");

/// An ordered set of splats. The position of a splat in `splats` is its
/// identity for tallies and orderings.
struct Scene {
    std::vector<Gaussian> splats;
    int sh_degree = 3;
    bool has_normals = true;
    std::vector<std::string> comments;

    std::size_t count() const noexcept { return splats.size(); }
    bool empty() const noexcept { return splats.empty(); }
};

/// Pinhole camera. `rotation`/`translation` map world points into the
/// camera frame (x right, y down, z forward).
struct Camera {
    int width = 0;
    int height = 0;
    float fx = 0.0f;
    float fy = 0.0f;
    float cx = 0.0f;
    float cy = 0.0f;
    Eigen::Matrix3f rotation = Eigen::Matrix3f::Identity();
    Eigen::Vector3f translation = Eigen::Vector3f::Zero();
    float near_plane = 0.01f;
    float far_plane = 100.0f;
    std::string name;

    Eigen::Vector3f to_view(const Eigen::Vector3f& world) const {
        return rotation * world + translation;
    }
    Eigen::Vector3f center() const { return -(rotation.transpose() * translation); }
};

/// Throws InvalidCamera unless the camera satisfies its invariants.
void validate(const Camera& camera);

/// Camera at `eye` looking at `target`, with `up` roughly pointing to -y in
/// the image.
Camera look_at(const Eigen::Vector3f& eye, const Eigen::Vector3f& target,
               const Eigen::Vector3f& up, int width, int height, float focal);

struct ActivatedGaussian {
    Eigen::Vector3f position;
    Eigen::Vector3f scale;
    Eigen::Vector4f rotation; // unit quaternion, w first
    float opacity = 0.5f;
    Eigen::Matrix3f covariance;
    std::array<float, 3> sh_dc{};
    std::array<float, kShRestCount> sh_rest{};
};

float sigmoid(float x) noexcept;

/// Rotation matrix of a unit quaternion stored as (w, x, y, z).
Eigen::Matrix3f quaternion_to_matrix(const Eigen::Vector4f& q);

/// Normalizes a quaternion; a zero-norm input becomes identity and warns.
Eigen::Vector4f normalize_quaternion(const std::array<float, 4>& q);

/// Maps stored parameters to render-time parameters. Throws
/// NonFiniteParameter on NaN/Inf input.
ActivatedGaussian activate(const Gaussian& g);

/// View-dependent color from real SH up to degree 3, offset by 0.5 and
/// clamped to [0, 1]. `view_dir` must be unit length.
std::array<float, 3> sh_to_rgb(const ActivatedGaussian& g, const Eigen::Vector3f& view_dir);

} // namespace splatstream
