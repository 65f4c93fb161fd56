#pragma once

#include "splatstream/splat_model.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace splatstream {

/// Cameras in the cameras.json layout written by common splat trainers:
/// an array of {img_name, width, height, position, rotation, fx, fy} where
/// `position` is the camera center and `rotation` the camera-to-world
/// rotation (row-major). Optional cx, cy, near, far override defaults.
std::vector<Camera> cameras_from_json(std::string_view text);
std::string cameras_to_json(std::span<const Camera> cameras);
std::vector<Camera> load_cameras(const std::filesystem::path& path);
void save_cameras(const std::filesystem::path& path, std::span<const Camera> cameras);

/// Converts a COLMAP text model (cameras.txt + images.txt). Distortion
/// parameters are ignored. Cameras come back sorted by image name.
std::vector<Camera> cameras_from_colmap(std::string_view cameras_txt, std::string_view images_txt);
std::vector<Camera> load_colmap_cameras(const std::filesystem::path& model_directory);

/// Keeps the cameras whose names appear in `split_text` (one name per line).
/// If nothing matches, all cameras are returned unchanged.
std::vector<Camera> select_split(std::span<const Camera> cameras, std::string_view split_text);

} // namespace splatstream
