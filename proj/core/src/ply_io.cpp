#include "splatstream/ply_io.hpp"

#include "splatstream/error.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>
#include <unordered_map>

namespace splatstream {
namespace {

constexpr std::string_view kEndHeader = "end_header\n";

int sh_rest_per_channel(int degree) {
    return (degree + 1) * (degree + 1) - 1;
}

std::optional<int> degree_from_rest_count(std::size_t count) {
    switch (count) {
        case 0: return 0;
        case 9: return 1;
        case 24: return 2;
        case 45: return 3;
        default: return std::nullopt;
    }
}

// Where a file column lands inside a Gaussian; nullptr means ignored.
float* field_slot(Gaussian& g, int slot) {
    if (slot < 3)
        return &g.position[slot];
    if (slot < 6)
        return &g.normal[slot - 3];
    if (slot < 9)
        return &g.sh_dc[slot - 6];
    if (slot < 9 + kShRestCount)
        return &g.sh_rest[slot - 9];
    if (slot == 9 + kShRestCount)
        return &g.opacity_logit;
    if (slot < 13 + kShRestCount)
        return &g.log_scale[slot - 10 - kShRestCount];
    if (slot < 17 + kShRestCount)
        return &g.rotation[slot - 13 - kShRestCount];
    return nullptr;
}

const float* field_slot(const Gaussian& g, int slot) {
    return field_slot(const_cast<Gaussian&>(g), slot);
}

// Maps a property name to a slot in a Gaussian given the per-channel SH
// count of the file, or -1 when the property is not a splat attribute.
int slot_of(const std::string& name, int rest_per_channel) {
    static const std::unordered_map<std::string, int> fixed = [] {
        std::unordered_map<std::string, int> m;
        const char* names[] = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
        for (int i = 0; i < 9; ++i)
            m[names[i]] = i;
        m["opacity"] = 9 + kShRestCount;
        for (int i = 0; i < 3; ++i)
            m["scale_" + std::to_string(i)] = 10 + kShRestCount + i;
        for (int i = 0; i < 4; ++i)
            m["rot_" + std::to_string(i)] = 13 + kShRestCount + i;
        return m;
    }();
    if (auto it = fixed.find(name); it != fixed.end())
        return it->second;
    if (name.rfind("f_rest_", 0) == 0 && rest_per_channel > 0) {
        int index = 0;
        try {
            index = std::stoi(name.substr(7));
        } catch (const std::exception&) {
            return -1;
        }
        if (index < 0 || index >= 3 * rest_per_channel)
            return -1;
        const int channel = index / rest_per_channel;
        const int coefficient = index % rest_per_channel;
        return 9 + channel * kShRestPerChannel + coefficient;
    }
    return -1;
}

std::vector<std::string> split_words(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> words;
    for (std::string w; in >> w;)
        words.push_back(w);
    return words;
}

} // namespace

std::vector<std::string> canonical_properties(int sh_degree, bool with_normals) {
    std::vector<std::string> names = {"x", "y", "z"};
    if (with_normals)
        names.insert(names.end(), {"nx", "ny", "nz"});
    names.insert(names.end(), {"f_dc_0", "f_dc_1", "f_dc_2"});
    const int rest = 3 * sh_rest_per_channel(sh_degree);
    for (int i = 0; i < rest; ++i)
        names.push_back("f_rest_" + std::to_string(i));
    names.push_back("opacity");
    for (int i = 0; i < 3; ++i)
        names.push_back("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i)
        names.push_back("rot_" + std::to_string(i));
    return names;
}

PlyLayout parse_ply_header(std::span<const std::uint8_t> bytes) {
    const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    const auto end = text.find(kEndHeader);
    if (text.substr(0, 4) != "ply\n" || end == std::string_view::npos)
        fail(ErrorCode::MalformedHeader, "missing 'ply' magic or 'end_header'");

    PlyLayout layout;
    layout.header_size = end + kEndHeader.size();

    std::istringstream lines{std::string(text.substr(0, end))};
    std::string line;
    std::getline(lines, line); // "ply"
    bool have_format = false;
    bool in_vertex = false;
    bool seen_vertex = false;
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        const auto words = split_words(line);
        if (words.empty())
            continue;
        const std::string& keyword = words[0];
        if (keyword == "format") {
            if (words.size() != 3)
                fail(ErrorCode::MalformedHeader, "bad format line: " + line);
            if (words[1] != "binary_little_endian")
                fail(ErrorCode::UnsupportedFormat, "unsupported PLY format '" + words[1] + "'");
            if (words[2] != "1.0")
                fail(ErrorCode::UnsupportedFormat, "unsupported PLY version " + words[2]);
            have_format = true;
        } else if (keyword == "comment" || keyword == "obj_info") {
            layout.comments.push_back(line.size() > keyword.size() ? line.substr(keyword.size() + 1) : "");
        } else if (keyword == "element") {
            if (words.size() != 3)
                fail(ErrorCode::MalformedHeader, "bad element line: " + line);
            std::size_t count = 0;
            try {
                std::size_t used = 0;
                const unsigned long long parsed = std::stoull(words[2], &used);
                if (used != words[2].size())
                    throw std::invalid_argument("trailing");
                count = static_cast<std::size_t>(parsed);
            } catch (const std::exception&) {
                fail(ErrorCode::MalformedHeader, "bad element count: " + line);
            }
            if (words[1] == "vertex") {
                if (seen_vertex)
                    fail(ErrorCode::MalformedHeader, "duplicate vertex element");
                seen_vertex = true;
                in_vertex = true;
                layout.vertex_count = count;
            } else {
                if (count != 0)
                    fail(ErrorCode::UnsupportedFormat, "unsupported element '" + words[1] + "'");
                in_vertex = false;
            }
        } else if (keyword == "property") {
            if (words.size() < 3)
                fail(ErrorCode::MalformedHeader, "bad property line: " + line);
            if (!in_vertex)
                continue; // properties of empty non-vertex elements
            if (words[1] == "list")
                fail(ErrorCode::UnsupportedFormat, "list properties are not supported");
            if (words[1] != "float" && words[1] != "float32")
                fail(ErrorCode::UnsupportedFormat, "property '" + words[2] + "' is not float32");
            if (std::find(layout.properties.begin(), layout.properties.end(), words[2]) !=
                layout.properties.end())
                fail(ErrorCode::MalformedHeader, "duplicate property '" + words[2] + "'");
            layout.properties.push_back(words[2]);
        } else {
            fail(ErrorCode::MalformedHeader, "unknown header keyword '" + keyword + "'");
        }
    }
    if (!have_format)
        fail(ErrorCode::MalformedHeader, "missing format line");
    if (!seen_vertex)
        fail(ErrorCode::MalformedHeader, "missing vertex element");

    auto has = [&](const std::string& name) {
        return std::find(layout.properties.begin(), layout.properties.end(), name) !=
               layout.properties.end();
    };
    for (const char* required : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0",
                                 "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        if (!has(required))
            fail(ErrorCode::MissingProperty, std::string("missing property ") + required);
    }
    const int normals = static_cast<int>(has("nx")) + has("ny") + has("nz");
    if (normals != 0 && normals != 3)
        fail(ErrorCode::MissingProperty, "normals must be all of nx, ny, nz or none");

    const auto rest_count = static_cast<std::size_t>(std::count_if(
        layout.properties.begin(), layout.properties.end(),
        [](const std::string& p) { return p.rfind("f_rest_", 0) == 0; }));
    if (!degree_from_rest_count(rest_count))
        fail(ErrorCode::MalformedHeader,
             "f_rest_* count " + std::to_string(rest_count) + " is not 0, 9, 24 or 45");
    for (std::size_t i = 0; i < rest_count; ++i) {
        if (!has("f_rest_" + std::to_string(i)))
            fail(ErrorCode::MissingProperty, "missing property f_rest_" + std::to_string(i));
    }
    return layout;
}

Scene load_ply(std::span<const std::uint8_t> bytes) {
    const PlyLayout layout = parse_ply_header(bytes);

    Scene scene;
    scene.comments = layout.comments;
    scene.has_normals = std::find(layout.properties.begin(), layout.properties.end(), "nx") !=
                        layout.properties.end();
    const auto rest_count = static_cast<std::size_t>(std::count_if(
        layout.properties.begin(), layout.properties.end(),
        [](const std::string& p) { return p.rfind("f_rest_", 0) == 0; }));
    scene.sh_degree = *degree_from_rest_count(rest_count);
    const int rest_per_channel = sh_rest_per_channel(scene.sh_degree);

    std::vector<int> slots;
    slots.reserve(layout.properties.size());
    for (const auto& name : layout.properties) {
        const int slot = slot_of(name, rest_per_channel);
        if (slot < 0)
            warn("ignoring unknown PLY property '" + name + "'");
        slots.push_back(slot);
    }

    const std::size_t stride = layout.stride();
    const std::size_t expected = layout.vertex_count * stride;
    const std::size_t actual = bytes.size() - layout.header_size;
    if (actual < expected)
        fail(ErrorCode::TruncatedBody, "expected " + std::to_string(expected) + " payload bytes, got " +
                                           std::to_string(actual));
    if (actual > expected)
        warn(std::to_string(actual - expected) + " trailing bytes after PLY payload ignored");

    scene.splats.resize(layout.vertex_count);
    const std::uint8_t* cursor = bytes.data() + layout.header_size;
    for (auto& g : scene.splats) {
        for (std::size_t p = 0; p < slots.size(); ++p, cursor += sizeof(float)) {
            if (float* target = slots[p] >= 0 ? field_slot(g, slots[p]) : nullptr)
                std::memcpy(target, cursor, sizeof(float));
        }
    }
    return scene;
}

Bytes write_ply(const Scene& scene, std::optional<std::span<const std::uint32_t>> order,
                std::optional<std::size_t> limit) {
    const std::size_t count = scene.count();
    if (order && !is_permutation_of(*order, count))
        fail(ErrorCode::InvalidPermutation, "ordering is not a permutation of the scene's splats");
    const std::size_t n = limit.value_or(count);
    if (n > count)
        fail(ErrorCode::InvalidArgument, "limit exceeds scene size");
    if (scene.sh_degree < 0 || scene.sh_degree > 3)
        fail(ErrorCode::InvalidArgument, "SH degree must be in [0, 3]");

    const auto properties = canonical_properties(scene.sh_degree, scene.has_normals);
    const int rest_per_channel = sh_rest_per_channel(scene.sh_degree);
    std::vector<int> slots;
    for (const auto& name : properties)
        slots.push_back(slot_of(name, rest_per_channel));

    std::string header = "ply\nformat binary_little_endian 1.0\n";
    for (const auto& comment : scene.comments)
        header += "comment " + comment + "\n";
    header += "element vertex " + std::to_string(n) + "\n";
    for (const auto& name : properties)
        header += "property float " + name + "\n";
    header += kEndHeader;

    Bytes out(header.size() + n * properties.size() * sizeof(float));
    std::memcpy(out.data(), header.data(), header.size());
    std::uint8_t* cursor = out.data() + header.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Gaussian& g = scene.splats[order ? (*order)[i] : i];
        for (int slot : slots) {
            std::memcpy(cursor, field_slot(g, slot), sizeof(float));
            cursor += sizeof(float);
        }
    }
    return out;
}

Scene load_ply_file(const std::filesystem::path& path) {
    const Bytes bytes = read_bytes(path);
    return load_ply(bytes);
}

void save_ply_file(const std::filesystem::path& path, const Scene& scene) {
    write_bytes(path, write_ply(scene));
}

} // namespace splatstream
