#pragma once

#include <filesystem>
#include <string>
#include <utility>

#include "roomweave/frame.hpp"
#include "roomweave/image.hpp"
#include "roomweave/mesh.hpp"

namespace roomweave::io {

// Dataset layout under a scene root:
//   color/%06d.png   8-bit RGB
//   depth/%06d.png   16-bit gray, millimeters (0 = invalid)
//   pose/%06d.txt    4x4 row-major camera-to-world
//   intrinsics.txt   fx fy cx cy width height

SceneDataset load_scene(const std::filesystem::path& root);
void save_scene(const SceneDataset& ds, const std::filesystem::path& root);

/// Uniform stride split: floor(n * fraction) input frames at indices
/// floor(i * n / n_input); the eval split is the complement in original order.
std::pair<SceneDataset, SceneDataset> split_views(const SceneDataset& ds, double fraction);

/// Binary little-endian PLY: double x y z, uchar red green blue, uint32 face lists.
void export_mesh(const TriangleMesh& mesh, const std::filesystem::path& path);
TriangleMesh import_mesh(const std::filesystem::path& path);

Image read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const Image& rgb, const std::filesystem::path& path);
/// 16-bit millimeter depth to meters.
Image read_png_depth_mm(const std::filesystem::path& path);
void write_png_depth_mm(const Image& depth_m, const std::filesystem::path& path);
void write_png_mask(const Mask& mask, const std::filesystem::path& path);

/// Single-channel little-endian PFM ("Pf", scale -1). Rows are stored bottom-up.
void write_pfm(const Image& gray, const std::filesystem::path& path);
Image read_pfm(const std::filesystem::path& path);

}  // namespace roomweave::io
