#include "gs4d/dataset.hpp"

#include "gs4d/error.hpp"
#include "gs4d/io_util.hpp"

#include <json.hpp>

#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <fstream>

namespace gs4d {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flips camera-space y and z between the OpenGL (+y up, -z forward) and the
// +y down, +z forward conventions.
const Mat4 kFlip = Eigen::Vector4d(1.0, -1.0, -1.0, 1.0).asDiagonal();

[[noreturn]] void field_error(const fs::path& file, const std::string& field, const std::string& what) {
    throw ParseError(file.filename().string() + ": field '" + field + "' " + what);
}

const json& require(const json& obj, const char* key, const fs::path& file, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) field_error(file, where + key, "is missing");
    return obj.at(key);
}

double number(const json& v, const fs::path& file, const std::string& field) {
    if (!v.is_number()) field_error(file, field, "must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) field_error(file, field, "must be finite");
    return d;
}

Mat3 nearest_rotation(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
        Mat3 u = svd.matrixU();
        u.col(2) *= -1.0;
        r = u * svd.matrixV().transpose();
    }
    return r;
}

struct SplitFile {
    std::vector<FrameInfo> frames;
};

SplitFile load_split(const fs::path& dir, const fs::path& file) {
    json doc;
    try {
        doc = json::parse(read_file(file));
    } catch (const json::parse_error& e) {
        throw ParseError(file.filename().string() + ": malformed JSON: " + e.what());
    }
    const double angle = number(require(doc, "camera_angle_x", file, ""), file, "camera_angle_x");
    if (!(angle > 0.0 && angle < M_PI)) field_error(file, "camera_angle_x", "must lie in (0, pi)");
    const json& frames = require(doc, "frames", file, "");
    if (!frames.is_array()) field_error(file, "frames", "must be an array");

    SplitFile out;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const json& f = frames[i];
        const std::string where = "frames[" + std::to_string(i) + "].";
        const json& fp = require(f, "file_path", file, where);
        if (!fp.is_string()) field_error(file, where + "file_path", "must be a string");
        fs::path rel = fp.get<std::string>();
        if (!rel.has_extension()) rel += ".png";
        const fs::path image = (dir / rel).lexically_normal();
        if (!fs::exists(image)) field_error(file, where + "file_path", "names a missing image " + image.string());

        const json& tm = require(f, "transform_matrix", file, where);
        if (!tm.is_array() || tm.size() != 4) field_error(file, where + "transform_matrix", "must be 4x4");
        Mat4 c2w;
        for (int r = 0; r < 4; ++r) {
            if (!tm[r].is_array() || tm[r].size() != 4) field_error(file, where + "transform_matrix", "must be 4x4");
            for (int c = 0; c < 4; ++c) {
                c2w(r, c) = number(tm[r][c], file, where + "transform_matrix");
            }
        }
        const double t = number(require(f, "time", file, where), file, where + "time");

        Mat4 c2w_cv = c2w * kFlip;
        const Mat3 rot = nearest_rotation(c2w_cv.topLeftCorner<3, 3>());
        if ((rot - c2w_cv.topLeftCorner<3, 3>()).cwiseAbs().maxCoeff() > 1e-3) {
            field_error(file, where + "transform_matrix", "is not a rigid transform");
        }
        c2w_cv.topLeftCorner<3, 3>() = rot;
        c2w_cv.row(3) << 0.0, 0.0, 0.0, 1.0;

        const auto [w, h] = image_size(image);
        FrameInfo info;
        info.camera.width = w;
        info.camera.height = h;
        info.camera.fx = 0.5 * w / std::tan(0.5 * angle);
        info.camera.fy = info.camera.fx;
        info.camera.cx = 0.5 * w;
        info.camera.cy = 0.5 * h;
        info.camera.set_world_to_camera(c2w_cv.inverse());
        info.time = std::clamp(t, 0.0, 1.0);
        info.image_path = image;
        out.frames.push_back(std::move(info));
    }
    return out;
}

} // namespace

std::vector<FrameInfo> Dataset::split(const std::vector<std::size_t>& indices) const {
    std::vector<FrameInfo> out;
    for (std::size_t i : indices) out.push_back(frames.at(i));
    return out;
}

Dataset load_dnerf_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw InvalidInput("dataset directory does not exist: " + dir.string());
    Dataset d;
    d.root = dir;
    const fs::path train = dir / "transforms_train.json";
    if (!fs::exists(train)) throw ParseError("missing transforms_train.json in " + dir.string());
    for (FrameInfo& f : load_split(dir, train).frames) {
        d.train.push_back(d.frames.size());
        d.frames.push_back(std::move(f));
    }
    const fs::path test = dir / "transforms_test.json";
    if (fs::exists(test)) {
        for (FrameInfo& f : load_split(dir, test).frames) {
            d.test.push_back(d.frames.size());
            d.frames.push_back(std::move(f));
        }
    }
    if (d.train.empty()) throw ParseError("transforms_train.json: field 'frames' is empty");
    const fs::path points = dir / "points3d.ply";
    if (fs::exists(points)) {
        d.points = read_ply_points(points);
        if (d.points->size() == 0) throw ParseError("points3d.ply: no vertices");
        d.bounds = Bounds::around(d.points->positions);
    } else {
        d.bounds.min = Vec3::Constant(-kDefaultSceneHalfExtent);
        d.bounds.max = Vec3::Constant(kDefaultSceneHalfExtent);
    }
    return d;
}

Mat4 camera_to_world_gl(const Camera& camera) {
    const Mat4 c2w_cv = camera.world_to_camera().inverse();
    return c2w_cv * kFlip;
}

std::vector<Frame> load_frames(const std::vector<FrameInfo>& frames, const Vec3& background) {
    std::vector<Frame> out;
    out.reserve(frames.size());
    for (const FrameInfo& info : frames) {
        Frame f;
        f.camera = info.camera;
        f.time = info.time;
        f.image = read_image(info.image_path, background);
        if (f.image.width != f.camera.width || f.image.height != f.camera.height) {
            throw InvalidInput("image " + info.image_path.string() + " does not match its camera size");
        }
        out.push_back(std::move(f));
    }
    return out;
}

namespace {

void check_intrinsics(const std::vector<Frame>& frames) {
    if (frames.empty()) return;
    const Camera& c0 = frames.front().camera;
    for (const Frame& f : frames) {
        const Camera& c = f.camera;
        if (c.fx != c.fy || c.fx != c0.fx || c.width != c0.width || c.height != c0.height ||
            c.cx != 0.5 * c.width || c.cy != 0.5 * c.height) {
            throw InvalidInput("write_dnerf_dataset: cameras of a split must share centred square-pixel intrinsics");
        }
        if (f.image.width != c.width || f.image.height != c.height) {
            throw InvalidInput("write_dnerf_dataset: image size does not match its camera");
        }
    }
}

json split_json(const std::vector<Frame>& frames, const std::string& split, const fs::path& dir) {
    json doc;
    if (frames.empty()) {
        doc["camera_angle_x"] = 0.5 * M_PI;
        doc["frames"] = json::array();
        return doc;
    }
    const Camera& c0 = frames.front().camera;
    doc["camera_angle_x"] = 2.0 * std::atan(0.5 * c0.width / c0.fx);
    json arr = json::array();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "r_%03zu", i);
        write_image(dir / split / (std::string(name) + ".png"), frames[i].image);
        const Mat4 m = camera_to_world_gl(frames[i].camera);
        json tm = json::array();
        for (int r = 0; r < 4; ++r) tm.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
        arr.push_back({{"file_path", "./" + split + "/" + name}, {"time", frames[i].time}, {"transform_matrix", tm}});
    }
    doc["frames"] = arr;
    return doc;
}

void write_text(const fs::path& path, const std::string& text) {
    atomic_write(path, [&](const fs::path& tmp) {
        std::ofstream f(tmp, std::ios::binary);
        f << text;
        if (!f) throw Error("cannot write " + tmp.string());
    });
}

} // namespace

void write_dnerf_dataset(const fs::path& dir, const std::vector<Frame>& train,
                         const std::vector<Frame>& test) {
    check_intrinsics(train);
    check_intrinsics(test);
    fs::create_directories(dir / "train");
    fs::create_directories(dir / "test");
    write_text(dir / "transforms_train.json", split_json(train, "train", dir).dump(2));
    write_text(dir / "transforms_test.json", split_json(test, "test", dir).dump(2));
}

} // namespace gs4d
