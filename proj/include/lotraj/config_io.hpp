#pragma once

// JSON (de)serialisation of robot, workspace and problem settings.
//
// Robot file layout:
//   {
//     "links": [{"alpha": .., "a": .., "theta_offset": .., "d": ..}, ...],
//     "joint_limits": [[lower, upper], ...],
//     "vel_limits": [...], "acc_limits": [...],
//     "workspace": {"effective": [primitive, ...], "interacting": [primitive, ...]},
//     "problem": {"mu": 0.5, "t_max": 3.0, "t_c": 2.0}
//   }
// Primitives:
//   {"type": "box", "lo": [x, y, z], "hi": [x, y, z]}
//   {"type": "shell_sector", "center": [x, y, z], "r_min": .., "r_max": ..,
//    "azimuth": [min, max], "elevation": [min, max]}          (radians)
// "workspace" and "problem" are optional; defaults are used when absent.

#include "lotraj/kinematics.hpp"
#include "lotraj/nlp.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace lotraj {

using Json = nlohmann::json;

inline Json vec_to_json(const Vec& v) { return Json(to_std(v)); }

inline Vec vec_from_json(const Json& j, std::string_view what) {
    if (!j.is_array()) throw SchemaError(std::string(what) + ": expected an array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw SchemaError(std::string(what) + ": expected an array of numbers");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

inline Eigen::Vector3d point_from_json(const Json& j, std::string_view what) {
    const Vec v = vec_from_json(j, what);
    if (v.size() != 3) throw SchemaError(std::string(what) + ": expected 3 coordinates");
    return v;
}

template <class T>
T field(const Json& j, const char* key, std::string_view where) {
    if (!j.contains(key)) throw SchemaError(std::string(where) + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw SchemaError(std::string(where) + ": bad field '" + key + "': " + e.what());
    }
}

inline Json robot_to_json(const RobotModel& m) {
    Json links = Json::array();
    for (const auto& l : m.links) {
        links.push_back({{"alpha", l.alpha}, {"a", l.a}, {"theta_offset", l.theta_offset}, {"d", l.d}});
    }
    Json limits = Json::array();
    for (const auto& r : m.joint_limits) limits.push_back({r.lower, r.upper});
    return {{"links", links},
            {"joint_limits", limits},
            {"vel_limits", vec_to_json(m.vel_limits)},
            {"acc_limits", vec_to_json(m.acc_limits)}};
}

inline RobotModel robot_from_json(const Json& j) {
    RobotModel m;
    if (!j.contains("links") || !j["links"].is_array()) throw SchemaError("robot: 'links' array required");
    for (const auto& l : j["links"]) {
        m.links.push_back({field<double>(l, "alpha", "robot link"), field<double>(l, "a", "robot link"),
                           field<double>(l, "theta_offset", "robot link"), field<double>(l, "d", "robot link")});
    }
    if (!j.contains("joint_limits") || !j["joint_limits"].is_array())
        throw SchemaError("robot: 'joint_limits' array required");
    for (const auto& r : j["joint_limits"]) {
        const Vec v = vec_from_json(r, "robot joint_limits entry");
        if (v.size() != 2) throw SchemaError("robot: joint_limits entries are [lower, upper]");
        m.joint_limits.push_back({v[0], v[1]});
    }
    m.vel_limits = vec_from_json(j.value("vel_limits", Json()), "robot vel_limits");
    m.acc_limits = vec_from_json(j.value("acc_limits", Json()), "robot acc_limits");
    try {
        m.validate();
    } catch (const InputError& e) {
        throw SchemaError(e.what());
    }
    return m;
}

inline Json primitive_to_json(const RegionPrimitive& p) {
    if (const auto* b = std::get_if<Box>(&p)) {
        return {{"type", "box"}, {"lo", vec_to_json(b->lo)}, {"hi", vec_to_json(b->hi)}};
    }
    const auto& s = std::get<ShellSector>(p);
    return {{"type", "shell_sector"},
            {"center", vec_to_json(s.center)},
            {"r_min", s.r_min},
            {"r_max", s.r_max},
            {"azimuth", {s.azimuth_min, s.azimuth_max}},
            {"elevation", {s.elevation_min, s.elevation_max}}};
}

inline RegionPrimitive primitive_from_json(const Json& j) {
    const auto type = field<std::string>(j, "type", "region primitive");
    if (type == "box") {
        return Box{point_from_json(j.value("lo", Json()), "box lo"), point_from_json(j.value("hi", Json()), "box hi")};
    }
    if (type == "shell_sector") {
        ShellSector s;
        s.center = point_from_json(j.value("center", Json()), "shell_sector center");
        s.r_min = field<double>(j, "r_min", "shell_sector");
        s.r_max = field<double>(j, "r_max", "shell_sector");
        if (j.contains("azimuth")) {
            const Vec a = vec_from_json(j["azimuth"], "shell_sector azimuth");
            if (a.size() != 2) throw SchemaError("shell_sector: azimuth is [min, max]");
            s.azimuth_min = a[0];
            s.azimuth_max = a[1];
        }
        if (j.contains("elevation")) {
            const Vec e = vec_from_json(j["elevation"], "shell_sector elevation");
            if (e.size() != 2) throw SchemaError("shell_sector: elevation is [min, max]");
            s.elevation_min = e[0];
            s.elevation_max = e[1];
        }
        return s;
    }
    throw SchemaError("region primitive: unknown type '" + type + "'");
}

inline Json region_to_json(const Region& r) {
    Json out = Json::array();
    for (const auto& p : r.primitives) out.push_back(primitive_to_json(p));
    return out;
}

inline Region region_from_json(const Json& j) {
    if (!j.is_array() || j.empty()) throw SchemaError("region: non-empty primitive array required");
    Region r;
    for (const auto& p : j) r.primitives.push_back(primitive_from_json(p));
    return r;
}

inline Json workspace_to_json(const WorkspaceSpec& ws) {
    return {{"effective", region_to_json(ws.effective)}, {"interacting", region_to_json(ws.interacting)}};
}

inline WorkspaceSpec workspace_from_json(const Json& j) {
    if (!j.contains("effective") || !j.contains("interacting"))
        throw SchemaError("workspace: 'effective' and 'interacting' regions required");
    return {region_from_json(j["effective"]), region_from_json(j["interacting"])};
}

/// Problem settings without the robot (the robot is stored alongside).
inline Json problem_to_json(const ProblemConfig& cfg) {
    return {{"mu", cfg.mu}, {"t_max", cfg.t_max}, {"t_c", cfg.t_c}};
}

inline void problem_from_json(const Json& j, ProblemConfig& cfg) {
    cfg.mu = j.value("mu", cfg.mu);
    cfg.t_max = j.value("t_max", cfg.t_max);
    cfg.t_c = j.value("t_c", cfg.t_c);
    try {
        cfg.validate();
    } catch (const InputError& e) {
        throw SchemaError(e.what());
    }
}

/// Hash of the robot model: FNV-1a over its canonical JSON text.
inline std::string robot_hash(const RobotModel& m) { return fnv1a_hex(robot_to_json(m).dump()); }

/// Hash of everything that determines a solve: robot plus problem settings.
inline std::string problem_hash(const ProblemConfig& cfg) {
    return fnv1a_hex(Json{{"robot", robot_to_json(cfg.model)}, {"problem", problem_to_json(cfg)}}.dump());
}

struct RobotConfig {
    ProblemConfig problem;  ///< includes the robot model
    WorkspaceSpec workspace = default_workspace();
};

inline Json robot_config_to_json(const RobotConfig& rc) {
    Json j = robot_to_json(rc.problem.model);
    j["workspace"] = workspace_to_json(rc.workspace);
    j["problem"] = problem_to_json(rc.problem);
    return j;
}

inline RobotConfig robot_config_from_json(const Json& j) {
    RobotConfig rc;
    rc.problem.model = robot_from_json(j);
    if (j.contains("workspace")) rc.workspace = workspace_from_json(j["workspace"]);
    if (j.contains("problem")) problem_from_json(j["problem"], rc.problem);
    return rc;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Json read_json_file(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw SchemaError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

/// Writes to a sibling temporary file and renames it into place, so readers
/// never observe a partially written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    namespace fs = std::filesystem;
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw SchemaError("cannot open '" + tmp.string() + "' for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw SchemaError("write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw SchemaError("cannot move '" + tmp.string() + "' to '" + path.string() + "'");
    }
}

inline RobotConfig load_robot_config(const std::filesystem::path& path) {
    return robot_config_from_json(read_json_file(path));
}

}  // namespace lotraj
