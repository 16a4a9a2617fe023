#include "roomweave/image.hpp"

#include <algorithm>
#include <numeric>

#include "roomweave/error.hpp"

namespace roomweave {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::Scene: return "E_SCENE";
        case ErrorCode::Mesh: return "E_MESH";
        case ErrorCode::Config: return "E_CONFIG";
        case ErrorCode::Geometry: return "E_GEOMETRY";
        case ErrorCode::Numeric: return "E_NUMERIC";
        case ErrorCode::Denoiser: return "E_DENOISER";
        case ErrorCode::Depth: return "E_DEPTH";
        case ErrorCode::Bridge: return "E_BRIDGE";
        case ErrorCode::Io: return "E_IO";
    }
    return "E_UNKNOWN";
}

size_t Mask::count() const {
    return static_cast<size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

Mask invert(const Mask& m) {
    Mask out(m.width, m.height);
    for (size_t i = 0; i < m.data.size(); ++i) out.data[i] = m.data[i] ? 0 : 1;
    return out;
}

Mask dilate(const Mask& m, int radius, bool wrap_x) {
    Mask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(x, y)) continue;
            for (int dy = -radius; dy <= radius; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= m.height) continue;
                for (int dx = -radius; dx <= radius; ++dx) {
                    int xx = x + dx;
                    if (wrap_x) {
                        xx = ((xx % m.width) + m.width) % m.width;
                    } else if (xx < 0 || xx >= m.width) {
                        continue;
                    }
                    out.at(xx, yy) = 1;
                }
            }
        }
    }
    return out;
}

Mask downsample_any(const Mask& m, int k) {
    if (k <= 0 || m.width % k != 0 || m.height % k != 0)
        throw Error(ErrorCode::Config, "mask dimensions not divisible by latent scale");
    Mask out(m.width / k, m.height / k);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y)) out.at(x / k, y / k) = 1;
    return out;
}

Image crop_cyclic(const Image& img, int x0, int width) {
    Image out(width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < width; ++x) {
            const int sx = ((x0 + x) % img.width + img.width) % img.width;
            std::copy_n(img.pixel(sx, y).data(), img.channels, out.pixel(x, y).data());
        }
    return out;
}

Mask crop_cyclic(const Mask& m, int x0, int width) {
    Mask out(width, m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < width; ++x) out.at(x, y) = m.at(((x0 + x) % m.width + m.width) % m.width, y);
    return out;
}

Image downsample_box(const Image& img, int k) {
    if (k == 1) return img;
    if (k <= 0 || img.width % k != 0 || img.height % k != 0)
        throw Error(ErrorCode::Config, "image dimensions not divisible by downsample factor");
    Image out(img.width / k, img.height / k, img.channels);
    const float norm = 1.0f / static_cast<float>(k * k);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(x / k, y / k, c) += img.at(x, y, c) * norm;
    return out;
}

Image to_grayscale(const Image& rgb) {
    if (rgb.channels == 1) return rgb;
    Image out(rgb.width, rgb.height, 1);
    for (int y = 0; y < rgb.height; ++y)
        for (int x = 0; x < rgb.width; ++x)
            out.at(x, y) = 0.299f * rgb.at(x, y, 0) + 0.587f * rgb.at(x, y, 1) + 0.114f * rgb.at(x, y, 2);
    return out;
}

}  // namespace roomweave
