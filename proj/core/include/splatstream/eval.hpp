#pragma once

#include "splatstream/chunker.hpp"
#include "splatstream/image.hpp"
#include "splatstream/ordering.hpp"
#include "splatstream/rasterizer.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace splatstream {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) over all channels, capped at `cap` (identical images
/// give exactly `cap`).
double psnr(const Image& a, const Image& b, double cap = kPsnrCap);

/// PSNR over the pixels where `mask` is non-zero (one entry per pixel).
double masked_psnr(const Image& a, const Image& b, std::span<const std::uint8_t> mask, double cap = kPsnrCap);

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), k1 = 0.01,
/// k2 = 0.03, dynamic range 1, valid-region mean per channel, averaged over
/// the three channels.
double ssim(const Image& a, const Image& b);

struct CurvePoint {
    double percent = 0.0;
    std::size_t splats = 0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct MetricCurve {
    Strategy strategy = Strategy::Contribution;
    std::string label;
    std::vector<CurvePoint> points;
};

struct EvalOptions {
    Encoding encoding = Encoding::Float32;
    std::array<float, 3> background{0.0f, 0.0f, 0.0f};
    unsigned threads = 0;
};

/// Number of splats in a prefix of `percent` percent of `total`, rounded up.
std::size_t prefix_count(double percent, std::size_t total);

/// Renders every ordering's prefixes through the chunk encode/decode path
/// and scores them against the full-scene render of the same camera.
std::vector<MetricCurve> evaluate_curve(const Scene& scene, std::span<const Ordering> orderings,
                                        std::span<const Camera> cameras, std::span<const double> percents,
                                        const EvalOptions& options = {});

std::string curves_to_csv(std::span<const MetricCurve> curves);
std::string curves_to_json(std::span<const MetricCurve> curves);
/// One "<label>.dat" per curve with columns: percent, psnr, ssim.
void write_gnuplot_data(const std::filesystem::path& directory, std::span<const MetricCurve> curves);

} // namespace splatstream
