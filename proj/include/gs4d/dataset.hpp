#pragma once

#include "gs4d/camera.hpp"
#include "gs4d/hexplane.hpp"
#include "gs4d/ply.hpp"
#include "gs4d/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gs4d {

struct FrameInfo {
    Camera camera;
    double time = 0.0;
    std::filesystem::path image_path;
};

/// Frames in file order; `train` and `test` index into `frames`.
struct Dataset {
    std::filesystem::path root;
    std::vector<FrameInfo> frames;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::optional<PointCloud> points; // points3d.ply next to the transforms, if any
    Bounds bounds;                    // from the points, or the default cube

    std::vector<FrameInfo> split(const std::vector<std::size_t>& indices) const;
};

/// Default box used when a scene has no point cloud.
constexpr double kDefaultSceneHalfExtent = 1.3;

/// Loads transforms_train.json / transforms_test.json (camera_angle_x,
/// frames[].file_path, frames[].transform_matrix camera-to-world in the
/// OpenGL convention, frames[].time). Poses become world-to-camera in the
/// +y down, +z forward convention; times are clamped to [0, 1]. Paths
/// without an extension get ".png". Throws ParseError naming the field.
Dataset load_dnerf_dataset(const std::filesystem::path& dir);

/// Camera-to-world OpenGL matrix for a camera (inverse of the loader's map).
Mat4 camera_to_world_gl(const Camera& camera);

/// Loads and checks the images of the given frames, compositing alpha over
/// `background`. Throws InvalidInput when an image size disagrees with the
/// camera.
std::vector<Frame> load_frames(const std::vector<FrameInfo>& frames, const Vec3& background);

/// Writes frames as a D-NeRF style directory: images under <split>/ and one
/// transforms_<split>.json per split. All cameras of a split must share
/// their intrinsics with fx = fy and a centred principal point.
void write_dnerf_dataset(const std::filesystem::path& dir, const std::vector<Frame>& train,
                         const std::vector<Frame>& test);

} // namespace gs4d
