#include "splatstream/splat_model.hpp"

#include "splatstream/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace splatstream {
namespace {

constexpr float kShC1 = 0.4886025119029199f;
constexpr std::array<float, 5> kShC2 = {1.0925484305920792f, -1.0925484305920792f,
                                        0.31539156525252005f, -1.0925484305920792f,
                                        0.5462742152960396f};
constexpr std::array<float, 7> kShC3 = {-0.5900435899266435f, 2.890611442640554f,
                                        -0.4570457994644658f, 0.3731763325901154f,
                                        -0.4570457994644658f, 1.445305721320277f,
                                        -0.5900435899266435f};

template <std::size_t N>
bool all_finite(const std::array<float, N>& values) {
    return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

} // namespace

void validate(const Camera& camera) {
    if (camera.width <= 0 || camera.height <= 0)
        fail(ErrorCode::InvalidCamera, "camera image size must be positive");
    if (!(camera.fx > 0.0f) || !(camera.fy > 0.0f) || !std::isfinite(camera.fx) ||
        !std::isfinite(camera.fy))
        fail(ErrorCode::InvalidCamera, "camera focal lengths must be positive");
    if (!std::isfinite(camera.cx) || !std::isfinite(camera.cy))
        fail(ErrorCode::InvalidCamera, "camera principal point must be finite");
    if (!(camera.near_plane > 0.0f) || !(camera.near_plane < camera.far_plane))
        fail(ErrorCode::InvalidCamera, "camera requires 0 < near < far");
    if (!camera.translation.allFinite() || !camera.rotation.allFinite())
        fail(ErrorCode::InvalidCamera, "camera pose must be finite");
    const Eigen::Matrix3d r = camera.rotation.cast<double>();
    const double deviation = (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (deviation > 1e-5 || r.determinant() < 0.0)
        fail(ErrorCode::InvalidCamera, "camera rotation is not orthonormal");
}

Camera look_at(const Eigen::Vector3f& eye, const Eigen::Vector3f& target,
               const Eigen::Vector3f& up, int width, int height, float focal) {
    const Eigen::Vector3f forward = (target - eye).normalized();
    const Eigen::Vector3f down = -up;
    const Eigen::Vector3f right = down.cross(forward).normalized();
    const Eigen::Vector3f image_down = forward.cross(right);

    Camera camera;
    camera.width = width;
    camera.height = height;
    camera.fx = focal;
    camera.fy = focal;
    camera.cx = 0.5f * static_cast<float>(width);
    camera.cy = 0.5f * static_cast<float>(height);
    camera.rotation.row(0) = right.transpose();
    camera.rotation.row(1) = image_down.transpose();
    camera.rotation.row(2) = forward.transpose();
    camera.translation = -(camera.rotation * eye);
    return camera;
}

float sigmoid(float x) noexcept {
    return 1.0f / (1.0f + std::exp(-x));
}

Eigen::Matrix3f quaternion_to_matrix(const Eigen::Vector4f& q) {
    const float w = q[0];
    const float x = q[1];
    const float y = q[2];
    const float z = q[3];
    Eigen::Matrix3f r;
    r << 1.0f - 2.0f * (y * y + z * z), 2.0f * (x * y - w * z), 2.0f * (x * z + w * y),
        2.0f * (x * y + w * z), 1.0f - 2.0f * (x * x + z * z), 2.0f * (y * z - w * x),
        2.0f * (x * z - w * y), 2.0f * (y * z + w * x), 1.0f - 2.0f * (x * x + y * y);
    return r;
}

Eigen::Vector4f normalize_quaternion(const std::array<float, 4>& q) {
    const Eigen::Vector4d v(q[0], q[1], q[2], q[3]);
    const double norm = v.norm();
    if (norm < 1e-12) {
        warn("zero-norm rotation quaternion replaced by identity");
        return Eigen::Vector4f(1.0f, 0.0f, 0.0f, 0.0f);
    }
    return (v / norm).cast<float>();
}

ActivatedGaussian activate(const Gaussian& g) {
    if (!all_finite(g.position) || !all_finite(g.log_scale) || !all_finite(g.rotation) ||
        !std::isfinite(g.opacity_logit) || !all_finite(g.sh_dc) || !all_finite(g.sh_rest))
        fail(ErrorCode::NonFiniteParameter, "splat has a NaN or infinite parameter");

    ActivatedGaussian a;
    a.position = Eigen::Vector3f(g.position[0], g.position[1], g.position[2]);
    a.scale = Eigen::Vector3f(std::exp(g.log_scale[0]), std::exp(g.log_scale[1]),
                              std::exp(g.log_scale[2]));
    if (!a.scale.allFinite() || (a.scale.array() <= 0.0f).any())
        fail(ErrorCode::NonFiniteParameter, "activated scale is not a positive finite value");
    a.rotation = normalize_quaternion(g.rotation);
    a.opacity = sigmoid(g.opacity_logit);

    const Eigen::Matrix3f r = quaternion_to_matrix(a.rotation);
    const Eigen::Matrix3f m = r * a.scale.asDiagonal();
    a.covariance = m * m.transpose();
    a.sh_dc = g.sh_dc;
    a.sh_rest = g.sh_rest;
    return a;
}

std::array<float, 3> sh_to_rgb(const ActivatedGaussian& g, const Eigen::Vector3f& view_dir) {
    const float x = view_dir.x();
    const float y = view_dir.y();
    const float z = view_dir.z();
    const float xx = x * x;
    const float yy = y * y;
    const float zz = z * z;

    // Basis values for coefficients 1..15 (the DC term is handled separately).
    const std::array<float, kShRestPerChannel> basis = {
        -kShC1 * y,
        kShC1 * z,
        -kShC1 * x,
        kShC2[0] * x * y,
        kShC2[1] * y * z,
        kShC2[2] * (2.0f * zz - xx - yy),
        kShC2[3] * x * z,
        kShC2[4] * (xx - yy),
        kShC3[0] * y * (3.0f * xx - yy),
        kShC3[1] * x * y * z,
        kShC3[2] * y * (4.0f * zz - xx - yy),
        kShC3[3] * z * (2.0f * zz - 3.0f * xx - 3.0f * yy),
        kShC3[4] * x * (4.0f * zz - xx - yy),
        kShC3[5] * z * (xx - yy),
        kShC3[6] * x * (xx - 3.0f * yy),
    };

    std::array<float, 3> rgb{};
    for (int c = 0; c < 3; ++c) {
        float value = static_cast<float>(kShC0) * g.sh_dc[c];
        for (int k = 0; k < kShRestPerChannel; ++k)
            value += basis[k] * g.sh_rest[c * kShRestPerChannel + k];
        rgb[c] = std::clamp(value + 0.5f, 0.0f, 1.0f);
    }
    return rgb;
}

} // namespace splatstream
