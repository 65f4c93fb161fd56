#include "splatstream/camera_io.hpp"

#include "splatstream/error.hpp"
#include "splatstream/file_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace splatstream {

std::vector<Camera> cameras_from_json(std::string_view text) {
    std::vector<Camera> cameras;
    try {
        const auto j = nlohmann::json::parse(text);
        if (!j.is_array())
            fail(ErrorCode::ParseError, "camera file must hold a JSON array");
        for (const auto& item : j) {
            Camera camera;
            camera.name = item.value("img_name", std::string());
            camera.width = item.at("width").get<int>();
            camera.height = item.at("height").get<int>();
            camera.fx = item.at("fx").get<float>();
            camera.fy = item.at("fy").get<float>();
            camera.cx = item.value("cx", 0.5f * static_cast<float>(camera.width));
            camera.cy = item.value("cy", 0.5f * static_cast<float>(camera.height));
            camera.near_plane = item.value("near", camera.near_plane);
            camera.far_plane = item.value("far", camera.far_plane);
            const auto position = item.at("position").get<std::array<float, 3>>();
            const auto rotation = item.at("rotation").get<std::array<std::array<float, 3>, 3>>();
            Eigen::Matrix3f camera_to_world;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    camera_to_world(r, c) = rotation[r][c];
            camera.rotation = camera_to_world.transpose();
            camera.translation = -(camera.rotation * Eigen::Vector3f(position[0], position[1], position[2]));
            validate(camera);
            cameras.push_back(std::move(camera));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("camera JSON: ") + e.what());
    }
    return cameras;
}

std::string cameras_to_json(std::span<const Camera> cameras) {
    nlohmann::json j = nlohmann::json::array();
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        const Camera& camera = cameras[i];
        const Eigen::Matrix3f camera_to_world = camera.rotation.transpose();
        const Eigen::Vector3f center = camera.center();
        std::array<std::array<float, 3>, 3> rotation{};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                rotation[r][c] = camera_to_world(r, c);
        j.push_back({{"id", i},
                     {"img_name", camera.name},
                     {"width", camera.width},
                     {"height", camera.height},
                     {"position", {center.x(), center.y(), center.z()}},
                     {"rotation", rotation},
                     {"fx", camera.fx},
                     {"fy", camera.fy},
                     {"cx", camera.cx},
                     {"cy", camera.cy},
                     {"near", camera.near_plane},
                     {"far", camera.far_plane}});
    }
    return j.dump(2);
}

std::vector<Camera> load_cameras(const std::filesystem::path& path) {
    return cameras_from_json(read_text(path));
}

void save_cameras(const std::filesystem::path& path, std::span<const Camera> cameras) {
    write_text(path, cameras_to_json(cameras));
}

namespace {

struct Intrinsics {
    int width = 0;
    int height = 0;
    float fx = 0.0f;
    float fy = 0.0f;
    float cx = 0.0f;
    float cy = 0.0f;
};

bool skip_line(const std::string& line) {
    const auto first = line.find_first_not_of(" \t\r");
    return first == std::string::npos || line[first] == '#';
}

Intrinsics parse_intrinsics(const std::string& model, int width, int height, const std::vector<float>& params) {
    Intrinsics in{width, height};
    auto need = [&](std::size_t n) {
        if (params.size() < n)
            fail(ErrorCode::ParseError, "COLMAP camera model " + model + " needs " + std::to_string(n) + " parameters");
    };
    if (model == "SIMPLE_PINHOLE" || model == "SIMPLE_RADIAL" || model == "RADIAL" || model == "SIMPLE_RADIAL_FISHEYE" ||
        model == "RADIAL_FISHEYE") {
        need(3);
        in.fx = in.fy = params[0];
        in.cx = params[1];
        in.cy = params[2];
        if (model != "SIMPLE_PINHOLE")
            warn("COLMAP model " + model + ": distortion ignored");
    } else if (model == "PINHOLE" || model == "OPENCV" || model == "OPENCV_FISHEYE" || model == "FULL_OPENCV") {
        need(4);
        in.fx = params[0];
        in.fy = params[1];
        in.cx = params[2];
        in.cy = params[3];
        if (model != "PINHOLE")
            warn("COLMAP model " + model + ": distortion ignored");
    } else {
        fail(ErrorCode::UnsupportedFormat, "unsupported COLMAP camera model " + model);
    }
    return in;
}

} // namespace

std::vector<Camera> cameras_from_colmap(std::string_view cameras_txt, std::string_view images_txt) {
    std::map<long, Intrinsics> intrinsics;
    {
        std::istringstream in{std::string(cameras_txt)};
        for (std::string line; std::getline(in, line);) {
            if (skip_line(line))
                continue;
            std::istringstream fields(line);
            long id = 0;
            std::string model;
            int width = 0;
            int height = 0;
            fields >> id >> model >> width >> height;
            if (!fields)
                fail(ErrorCode::ParseError, "bad COLMAP camera line: " + line);
            std::vector<float> params;
            for (float v; fields >> v;)
                params.push_back(v);
            intrinsics[id] = parse_intrinsics(model, width, height, params);
        }
    }

    std::vector<Camera> cameras;
    std::istringstream in{std::string(images_txt)};
    bool expect_points = false;
    for (std::string line; std::getline(in, line);) {
        if (expect_points) {
            // Every image line is followed by its 2D observations, possibly empty.
            expect_points = false;
            continue;
        }
        if (skip_line(line))
            continue;
        std::istringstream fields(line);
        long image_id = 0;
        long camera_id = 0;
        std::array<float, 4> q{};
        Eigen::Vector3f t;
        std::string name;
        fields >> image_id >> q[0] >> q[1] >> q[2] >> q[3] >> t.x() >> t.y() >> t.z() >> camera_id >> name;
        if (!fields)
            fail(ErrorCode::ParseError, "bad COLMAP image line: " + line);
        const auto it = intrinsics.find(camera_id);
        if (it == intrinsics.end())
            fail(ErrorCode::ParseError, "image " + name + " refers to unknown camera " + std::to_string(camera_id));
        Camera camera;
        camera.name = name;
        camera.width = it->second.width;
        camera.height = it->second.height;
        camera.fx = it->second.fx;
        camera.fy = it->second.fy;
        camera.cx = it->second.cx;
        camera.cy = it->second.cy;
        camera.rotation = quaternion_to_matrix(normalize_quaternion(q));
        camera.translation = t;
        validate(camera);
        cameras.push_back(std::move(camera));
        expect_points = true;
    }
    std::stable_sort(cameras.begin(), cameras.end(), [](const Camera& a, const Camera& b) { return a.name < b.name; });
    return cameras;
}

std::vector<Camera> load_colmap_cameras(const std::filesystem::path& model_directory) {
    return cameras_from_colmap(read_text(model_directory / "cameras.txt"), read_text(model_directory / "images.txt"));
}

std::vector<Camera> select_split(std::span<const Camera> cameras, std::string_view split_text) {
    std::set<std::string> names;
    std::istringstream in{std::string(split_text)};
    for (std::string line; std::getline(in, line);) {
        line.erase(std::remove(line.begin(), line.end(), '\r'), line.end());
        if (!line.empty())
            names.insert(line);
    }
    std::vector<Camera> selected;
    for (const auto& camera : cameras)
        if (names.count(camera.name))
            selected.push_back(camera);
    if (selected.empty()) {
        warn("split file matched no camera names; using all cameras");
        return {cameras.begin(), cameras.end()};
    }
    return selected;
}

} // namespace splatstream
