#pragma once

#include <string>
#include <vector>

#include "roomweave/geometry.hpp"
#include "roomweave/image.hpp"

namespace roomweave {

/// One RGBD observation with camera-to-world pose.
struct RgbdFrame {
    Image color;  // 3 channels in [0, 1]
    Image depth;  // meters, 0 = invalid
    RigidTransform pose;
    CameraIntrinsics intrinsics;
    int frame_id = 0;

    ViewSpec view() const { return ViewSpec::perspective(intrinsics, pose); }
    /// Throws E_SCENE naming the frame when an invariant fails.
    void validate() const;
};

struct SceneDataset {
    std::string scene_id;
    std::vector<RgbdFrame> frames;
};

}  // namespace roomweave
