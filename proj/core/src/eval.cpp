#include "splatstream/eval.hpp"

#include "splatstream/error.hpp"
#include "splatstream/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace splatstream {
namespace {

void check_same_size(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height || a.pixels.size() != b.pixels.size())
        fail(ErrorCode::DimensionMismatch, "images differ in size");
}

double psnr_from_mse(double mse, double cap) {
    if (!(mse > 0.0))
        return cap;
    return std::min(cap, 10.0 * std::log10(1.0 / mse));
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_window() {
    std::array<double, kWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += w[i];
    }
    for (auto& v : w)
        v /= sum;
    return w;
}

// Separable valid-region filtering of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int width, int height,
                                 const std::array<double, kWindow>& w) {
    const int out_w = width - kWindow + 1;
    const int out_h = height - kWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(out_w) * height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k)
                acc += w[k] * plane[static_cast<std::size_t>(y) * width + x + k];
            rows[static_cast<std::size_t>(y) * out_w + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(out_w) * out_h);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k)
                acc += w[k] * rows[static_cast<std::size_t>(y + k) * out_w + x];
            out[static_cast<std::size_t>(y) * out_w + x] = acc;
        }
    return out;
}

} // namespace

double psnr(const Image& a, const Image& b, double cap) {
    check_same_size(a, b);
    if (a.pixels.empty())
        fail(ErrorCode::TooSmall, "cannot compare empty images");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
        sum += d * d;
    }
    return psnr_from_mse(sum / static_cast<double>(a.pixels.size()), cap);
}

double masked_psnr(const Image& a, const Image& b, std::span<const std::uint8_t> mask, double cap) {
    check_same_size(a, b);
    if (mask.size() != a.pixel_count())
        fail(ErrorCode::DimensionMismatch, "mask size differs from image size");
    double sum = 0.0;
    std::size_t samples = 0;
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p])
            continue;
        for (int c = 0; c < 3; ++c) {
            const double d = static_cast<double>(a.pixels[p * 3 + c]) - b.pixels[p * 3 + c];
            sum += d * d;
        }
        samples += 3;
    }
    if (samples == 0)
        fail(ErrorCode::EmptyMask, "mask selects no pixels");
    return psnr_from_mse(sum / static_cast<double>(samples), cap);
}

double ssim(const Image& a, const Image& b) {
    check_same_size(a, b);
    if (a.width < kWindow || a.height < kWindow)
        fail(ErrorCode::TooSmall, "SSIM needs images of at least 11x11 pixels");

    constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
    constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
    const auto window = gaussian_window();
    const std::size_t n = a.pixel_count();

    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t p = 0; p < n; ++p) {
            x[p] = a.pixels[p * 3 + c];
            y[p] = b.pixels[p * 3 + c];
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        const auto mu_x = filter_valid(x, a.width, a.height, window);
        const auto mu_y = filter_valid(y, a.width, a.height, window);
        const auto e_xx = filter_valid(xx, a.width, a.height, window);
        const auto e_yy = filter_valid(yy, a.width, a.height, window);
        const auto e_xy = filter_valid(xy, a.width, a.height, window);
        double sum = 0.0;
        for (std::size_t i = 0; i < mu_x.size(); ++i) {
            const double mx = mu_x[i];
            const double my = mu_y[i];
            const double var_x = e_xx[i] - mx * mx;
            const double var_y = e_yy[i] - my * my;
            const double cov = e_xy[i] - mx * my;
            sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
        }
        total += sum / static_cast<double>(mu_x.size());
    }
    return total / 3.0;
}

std::size_t prefix_count(double percent, std::size_t total) {
    if (!(percent >= 0.0 && percent <= 100.0))
        fail(ErrorCode::InvalidArgument, "percent must lie in [0, 100]");
    const double exact = percent / 100.0 * static_cast<double>(total);
    return std::min(total, static_cast<std::size_t>(std::ceil(exact - 1e-9)));
}

std::vector<MetricCurve> evaluate_curve(const Scene& scene, std::span<const Ordering> orderings,
                                        std::span<const Camera> cameras, std::span<const double> percents,
                                        const EvalOptions& options) {
    if (cameras.empty())
        fail(ErrorCode::InvalidArgument, "evaluation needs at least one camera");
    if (percents.empty() || percents.back() != 100.0)
        fail(ErrorCode::InvalidArgument, "percents must end at 100");
    if (!std::is_sorted(percents.begin(), percents.end()))
        fail(ErrorCode::InvalidArgument, "percents must be ascending");
    for (const auto& ordering : orderings)
        check_ordering(ordering, scene.count());

    RenderOptions render_options;
    render_options.background = options.background;
    render_options.threads = 1;

    std::vector<Image> reference(cameras.size());
    parallel_for(
        cameras.size(), [&](std::size_t v) { reference[v] = render(scene, cameras[v], render_options).image; },
        options.threads);

    struct Task {
        std::size_t ordering;
        std::size_t point;
    };
    std::vector<Task> tasks;
    std::vector<MetricCurve> curves(orderings.size());
    for (std::size_t o = 0; o < orderings.size(); ++o) {
        curves[o].strategy = orderings[o].strategy;
        curves[o].label = std::string(to_string(orderings[o].strategy));
        curves[o].points.resize(percents.size());
        for (std::size_t p = 0; p < percents.size(); ++p)
            tasks.push_back({o, p});
    }

    parallel_for(
        tasks.size(),
        [&](std::size_t t) {
            const auto [o, p] = tasks[t];
            const std::size_t n = prefix_count(percents[p], scene.count());
            Scene prefix;
            prefix.sh_degree = scene.sh_degree;
            if (n > 0) {
                std::vector<double> sizes{static_cast<double>(n)};
                if (n < scene.count())
                    sizes.push_back(static_cast<double>(scene.count() - n));
                ChunkOptions chunk_options;
                chunk_options.encoding = options.encoding;
                const auto chunked = make_chunks(scene, orderings[o], ChunkSizes::counts(sizes), chunk_options);
                prefix = decode_stream(chunked.manifest, std::span<const Bytes>(chunked.chunks.data(), 1));
            }
            CurvePoint point;
            point.percent = percents[p];
            point.splats = n;
            const PreparedScene prepared = prepare(prefix);
            for (std::size_t v = 0; v < cameras.size(); ++v) {
                const Image image = render(prepared, cameras[v], render_options).image;
                point.psnr += psnr(image, reference[v]);
                point.ssim += ssim(image, reference[v]);
            }
            point.psnr /= static_cast<double>(cameras.size());
            point.ssim /= static_cast<double>(cameras.size());
            curves[o].points[p] = point;
        },
        options.threads);
    return curves;
}

std::string curves_to_csv(std::span<const MetricCurve> curves) {
    std::ostringstream out;
    out << std::setprecision(10);
    out << "strategy,percent,splats,psnr,ssim,lpips\n";
    for (const auto& curve : curves)
        for (const auto& p : curve.points)
            out << curve.label << ',' << p.percent << ',' << p.splats << ',' << p.psnr << ',' << p.ssim
                << ",not computed\n";
    return out.str();
}

std::string curves_to_json(std::span<const MetricCurve> curves) {
    nlohmann::json j;
    j["psnr_cap"] = kPsnrCap;
    j["lpips"] = "not computed";
    j["curves"] = nlohmann::json::array();
    for (const auto& curve : curves) {
        nlohmann::json c;
        c["strategy"] = std::string(to_string(curve.strategy));
        c["label"] = curve.label;
        c["points"] = nlohmann::json::array();
        for (const auto& p : curve.points)
            c["points"].push_back({{"percent", p.percent}, {"splats", p.splats}, {"psnr", p.psnr}, {"ssim", p.ssim}});
        j["curves"].push_back(std::move(c));
    }
    return j.dump(2);
}

void write_gnuplot_data(const std::filesystem::path& directory, std::span<const MetricCurve> curves) {
    std::filesystem::create_directories(directory);
    for (const auto& curve : curves) {
        std::ostringstream out;
        out << std::setprecision(10) << "# " << curve.label << "\n# percent psnr ssim\n";
        for (const auto& p : curve.points)
            out << p.percent << ' ' << p.psnr << ' ' << p.ssim << '\n';
        write_text(directory / (curve.label + ".dat"), out.str());
    }
}

} // namespace splatstream
