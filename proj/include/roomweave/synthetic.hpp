#pragma once

#include <cstdint>
#include <vector>

#include "roomweave/frame.hpp"
#include "roomweave/mesh.hpp"

namespace roomweave::synthetic {

/// Axis-aligned box room centered at the origin. y points down: the floor is
/// at y = +size.y / 2.
struct RoomSpec {
    Eigen::Vector3d size{4.0, 2.6, 5.0};
    double cell = 0.1;             // wall tessellation step in meters
    std::uint64_t style_seed = 7;  // texture variation
};

/// Closed room with inward-facing walls and a smooth procedural texture.
TriangleMesh box_room(const RoomSpec& spec);

/// Solid box with outward-facing sides (furniture, occluders).
TriangleMesh solid_box(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, const Eigen::Vector3f& color,
                       double cell = 0.1);

/// Random room dimensions in [3, 6] x [2.4, 3.2] x [3, 6] meters.
RoomSpec random_room(std::uint64_t seed);

/// Renders `mesh` into an RGBD frame (depth 0 where uncovered).
RgbdFrame render_frame(const TriangleMesh& mesh, const CameraIntrinsics& k, const RigidTransform& pose, int frame_id);

struct TrajectorySpec {
    int frames = 100;
    double radius = 0.6;           // camera circle around the room center
    double elevation_deg = 5.0;    // amplitude of the tilt oscillation
    int width = 240;
    int height = 180;
    double hfov_deg = 80.0;
};

/// Cameras on a horizontal circle, looking outward and sweeping a full turn.
SceneDataset render_trajectory(const TriangleMesh& mesh, const TrajectorySpec& spec, const std::string& scene_id);

}  // namespace roomweave::synthetic
