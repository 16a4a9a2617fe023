#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace roomweave {

/// Dense row-major H x W x C float raster. Used for colors, depth, distance
/// and latent values alike.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.0f)
        : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, fill) {}

    bool empty() const { return data.empty(); }
    size_t index(int x, int y, int c = 0) const {
        return (static_cast<size_t>(y) * width + x) * channels + c;
    }
    float& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    float at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
    std::span<float> pixel(int x, int y) { return {data.data() + index(x, y), static_cast<size_t>(channels)}; }
    std::span<const float> pixel(int x, int y) const {
        return {data.data() + index(x, y), static_cast<size_t>(channels)};
    }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

/// Binary raster, one byte per cell (0 or 1).
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    std::uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t count() const;
    bool any() const { return count() > 0; }
};

Mask invert(const Mask& m);
/// 8-neighbourhood dilation; `wrap_x` treats columns as cyclic.
Mask dilate(const Mask& m, int radius, bool wrap_x = false);
/// A cell of the result is set if any of its k x k source cells is set.
Mask downsample_any(const Mask& m, int k);

/// Crop `width` columns starting at `x0`, wrapping horizontally.
Image crop_cyclic(const Image& img, int x0, int width);
Mask crop_cyclic(const Mask& m, int x0, int width);

/// Box average over k x k blocks.
Image downsample_box(const Image& img, int k);
Image to_grayscale(const Image& rgb);

}  // namespace roomweave
