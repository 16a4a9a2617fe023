#include "roomweave/scene_io.hpp"

#include <png.h>

#include <csetjmp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "roomweave/error.hpp"

namespace fs = std::filesystem;

namespace roomweave::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode, ErrorCode code) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw Error(code, "cannot open " + path.string());
    return f;
}

void png_warn(png_structp, png_const_charp) {}

struct PngRaw {
    int width = 0, height = 0, channels = 0, bit_depth = 0;
    std::vector<std::uint8_t> bytes;
};

PngRaw read_png_raw(const fs::path& path) {
    FilePtr f = open_file(path, "rb", ErrorCode::Io);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
    png_infop info = png_create_info_struct(png);
    PngRaw raw;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::Io, "png: cannot decode " + path.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    const int color_type = png_get_color_type(png, info);
    raw.bit_depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && raw.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (raw.bit_depth == 16) png_set_swap(png);
    png_read_update_info(png, info);
    raw.width = static_cast<int>(png_get_image_width(png, info));
    raw.height = static_cast<int>(png_get_image_height(png, info));
    raw.channels = png_get_channels(png, info);
    raw.bit_depth = png_get_bit_depth(png, info);
    const size_t stride = png_get_rowbytes(png, info);
    raw.bytes.resize(stride * raw.height);
    rows.resize(raw.height);
    for (int y = 0; y < raw.height; ++y) rows[y] = raw.bytes.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return raw;
}

void write_png_raw(const fs::path& path, int width, int height, int color_type, int bit_depth,
                   const std::vector<std::uint8_t>& bytes) {
    FilePtr f = open_file(path, "wb", ErrorCode::Io);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::Io, "png: cannot encode " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);
    const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
    const size_t stride = static_cast<size_t>(width) * channels * (bit_depth / 8);
    for (int y = 0; y < height; ++y) png_write_row(png, const_cast<png_bytep>(bytes.data() + stride * y));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::uint8_t quantize8(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

std::map<int, fs::path> numbered_files(const fs::path& dir, const std::string& ext) {
    std::map<int, fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ext) continue;
        const std::string stem = entry.path().stem().string();
        if (stem.empty() || !std::all_of(stem.begin(), stem.end(), ::isdigit)) continue;
        out[std::stoi(stem)] = entry.path();
    }
    return out;
}

std::string frame_name(int id, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d%s", id, ext);
    return buf;
}

}  // namespace

Image read_png_rgb(const fs::path& path) {
    PngRaw raw = read_png_raw(path);
    if (raw.bit_depth != 8) throw Error(ErrorCode::Scene, path.string() + ": expected 8-bit color PNG");
    Image img(raw.width, raw.height, 3);
    for (int y = 0; y < raw.height; ++y)
        for (int x = 0; x < raw.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const int sc = raw.channels >= 3 ? c : 0;
                img.at(x, y, c) = raw.bytes[(static_cast<size_t>(y) * raw.width + x) * raw.channels + sc] / 255.0f;
            }
    return img;
}

void write_png_rgb(const Image& rgb, const fs::path& path) {
    if (rgb.channels != 3) throw Error(ErrorCode::Io, "write_png_rgb: expected 3 channels");
    std::vector<std::uint8_t> bytes(rgb.data.size());
    std::transform(rgb.data.begin(), rgb.data.end(), bytes.begin(), quantize8);
    write_png_raw(path, rgb.width, rgb.height, PNG_COLOR_TYPE_RGB, 8, bytes);
}

Image read_png_depth_mm(const fs::path& path) {
    PngRaw raw = read_png_raw(path);
    if (raw.bit_depth != 16 || raw.channels != 1)
        throw Error(ErrorCode::Scene, path.string() + ": expected 16-bit grayscale depth PNG");
    Image img(raw.width, raw.height, 1);
    for (size_t i = 0; i < img.data.size(); ++i) {
        std::uint16_t mm;
        std::memcpy(&mm, raw.bytes.data() + 2 * i, 2);
        img.data[i] = static_cast<float>(mm) / 1000.0f;
    }
    return img;
}

void write_png_depth_mm(const Image& depth_m, const fs::path& path) {
    std::vector<std::uint8_t> bytes(depth_m.data.size() * 2);
    for (size_t i = 0; i < depth_m.data.size(); ++i) {
        const double mm = std::round(static_cast<double>(depth_m.data[i]) * 1000.0);
        const auto v = static_cast<std::uint16_t>(std::clamp(mm, 0.0, 65535.0));
        std::memcpy(bytes.data() + 2 * i, &v, 2);
    }
    write_png_raw(path, depth_m.width, depth_m.height, PNG_COLOR_TYPE_GRAY, 16, bytes);
}

void write_png_mask(const Mask& mask, const fs::path& path) {
    std::vector<std::uint8_t> bytes(mask.data.size());
    for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
    write_png_raw(path, mask.width, mask.height, PNG_COLOR_TYPE_GRAY, 8, bytes);
}

void write_pfm(const Image& gray, const fs::path& path) {
    if (gray.channels != 1) throw Error(ErrorCode::Io, "write_pfm: expected 1 channel");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string());
    os << "Pf\n" << gray.width << " " << gray.height << "\n-1.0\n";
    for (int y = gray.height - 1; y >= 0; --y)
        os.write(reinterpret_cast<const char*>(gray.data.data() + static_cast<size_t>(y) * gray.width),
                 static_cast<std::streamsize>(sizeof(float) * gray.width));
    if (!os) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

Image read_pfm(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    is >> magic >> w >> h >> scale;
    is.get();
    if (magic != "Pf" || w <= 0 || h <= 0 || scale >= 0.0)
        throw Error(ErrorCode::Io, path.string() + ": unsupported PFM (need little-endian Pf)");
    Image img(w, h, 1);
    for (int y = h - 1; y >= 0; --y)
        is.read(reinterpret_cast<char*>(img.data.data() + static_cast<size_t>(y) * w),
                static_cast<std::streamsize>(sizeof(float) * w));
    if (!is) throw Error(ErrorCode::Io, path.string() + ": truncated PFM");
    return img;
}

SceneDataset load_scene(const fs::path& root) {
    if (!fs::is_directory(root)) throw Error(ErrorCode::Scene, "scene directory not found: " + root.string());
    const auto colors = numbered_files(root / "color", ".png");
    const auto depths = numbered_files(root / "depth", ".png");
    const auto poses = numbered_files(root / "pose", ".txt");
    if (colors.empty()) throw Error(ErrorCode::Scene, "no frames in " + root.string());

    CameraIntrinsics k;
    {
        std::ifstream is(root / "intrinsics.txt");
        if (!is) throw Error(ErrorCode::Scene, "missing intrinsics.txt in " + root.string());
        if (!(is >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height))
            throw Error(ErrorCode::Scene, "malformed intrinsics.txt");
        try {
            k.validate();
        } catch (const Error& e) {
            throw Error(ErrorCode::Scene, std::string("intrinsics.txt: ") + e.what());
        }
    }

    SceneDataset ds;
    ds.scene_id = root.filename().string();
    if (ds.scene_id.empty()) ds.scene_id = root.parent_path().filename().string();
    for (const auto& [id, color_path] : colors) {
        const std::string tag = "frame " + std::to_string(id) + ": ";
        if (!depths.count(id)) throw Error(ErrorCode::Scene, tag + "missing depth file");
        if (!poses.count(id)) throw Error(ErrorCode::Scene, tag + "missing pose file");
        RgbdFrame f;
        f.frame_id = id;
        f.intrinsics = k;
        try {
            f.color = read_png_rgb(color_path);
            f.depth = read_png_depth_mm(depths.at(id));
        } catch (const Error& e) {
            throw Error(ErrorCode::Scene, tag + e.what());
        }
        std::ifstream ps(poses.at(id));
        Eigen::Matrix4d m;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                if (!(ps >> m(r, c))) throw Error(ErrorCode::Scene, tag + "malformed pose file");
        if (!m.allFinite()) throw Error(ErrorCode::Scene, tag + "non-finite pose");
        f.pose = RigidTransform::from_matrix(m);
        if (f.color.width != k.width || f.color.height != k.height || f.depth.width != k.width ||
            f.depth.height != k.height)
            throw Error(ErrorCode::Scene, tag + "image dimensions do not match intrinsics");
        f.validate();
        ds.frames.push_back(std::move(f));
    }
    return ds;
}

void save_scene(const SceneDataset& ds, const fs::path& root) {
    if (ds.frames.empty()) throw Error(ErrorCode::Scene, "save_scene: no frames");
    fs::create_directories(root / "color");
    fs::create_directories(root / "depth");
    fs::create_directories(root / "pose");
    {
        const auto& k = ds.frames.front().intrinsics;
        std::ofstream os(root / "intrinsics.txt");
        os.precision(17);
        os << k.fx << " " << k.fy << " " << k.cx << " " << k.cy << " " << k.width << " " << k.height << "\n";
    }
    for (const auto& f : ds.frames) {
        write_png_rgb(f.color, root / "color" / frame_name(f.frame_id, ".png"));
        write_png_depth_mm(f.depth, root / "depth" / frame_name(f.frame_id, ".png"));
        std::ofstream os(root / "pose" / frame_name(f.frame_id, ".txt"));
        os.precision(17);
        const Eigen::Matrix4d m = f.pose.matrix();
        for (int r = 0; r < 4; ++r) os << m(r, 0) << " " << m(r, 1) << " " << m(r, 2) << " " << m(r, 3) << "\n";
    }
}

std::pair<SceneDataset, SceneDataset> split_views(const SceneDataset& ds, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(ErrorCode::Config, "split_views: fraction must be in (0, 1]");
    const size_t n = ds.frames.size();
    const auto n_input = static_cast<size_t>(std::floor(static_cast<double>(n) * fraction + 1e-9));
    if (n_input == 0) throw Error(ErrorCode::Config, "split_views: fraction selects no input views");
    std::vector<std::uint8_t> is_input(n, 0);
    for (size_t i = 0; i < n_input; ++i) is_input[i * n / n_input] = 1;
    SceneDataset input{ds.scene_id, {}}, eval{ds.scene_id, {}};
    for (size_t i = 0; i < n; ++i) (is_input[i] ? input : eval).frames.push_back(ds.frames[i]);
    return {std::move(input), std::move(eval)};
}

void export_mesh(const TriangleMesh& mesh, const fs::path& path) {
    mesh.validate();
    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\n"
           << "element vertex " << mesh.vertices.size() << "\n"
           << "property double x\nproperty double y\nproperty double z\n"
           << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
           << "element face " << mesh.faces.size() << "\n"
           << "property list uchar uint vertex_indices\nend_header\n";
    const std::string h = header.str();
    std::vector<char> buf(h.begin(), h.end());
    buf.reserve(h.size() + mesh.vertices.size() * 27 + mesh.faces.size() * 13);
    auto put = [&buf](const void* p, size_t n) {
        const char* c = static_cast<const char*>(p);
        buf.insert(buf.end(), c, c + n);
    };
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        put(mesh.vertices[i].data(), 3 * sizeof(double));
        const std::uint8_t rgb[3] = {quantize8(mesh.colors[i].x()), quantize8(mesh.colors[i].y()),
                                     quantize8(mesh.colors[i].z())};
        put(rgb, 3);
    }
    for (const auto& f : mesh.faces) {
        const std::uint8_t n = 3;
        put(&n, 1);
        put(f.data(), 3 * sizeof(std::uint32_t));
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string());
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

namespace {

size_t ply_type_size(const std::string& t) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    throw Error(ErrorCode::Mesh, "ply: unsupported property type " + t);
}

double ply_read_scalar(const std::string& t, const char* p) {
    if (t == "char" || t == "int8") return *reinterpret_cast<const std::int8_t*>(p);
    if (t == "uchar" || t == "uint8") return *reinterpret_cast<const std::uint8_t*>(p);
    std::int16_t s16; std::uint16_t u16; std::int32_t s32; std::uint32_t u32; float f32; double f64;
    if (t == "short" || t == "int16") { std::memcpy(&s16, p, 2); return s16; }
    if (t == "ushort" || t == "uint16") { std::memcpy(&u16, p, 2); return u16; }
    if (t == "int" || t == "int32") { std::memcpy(&s32, p, 4); return s32; }
    if (t == "uint" || t == "uint32") { std::memcpy(&u32, p, 4); return u32; }
    if (t == "float" || t == "float32") { std::memcpy(&f32, p, 4); return f32; }
    std::memcpy(&f64, p, 8);
    return f64;
}

struct PlyProperty {
    std::string name, type, count_type;
    bool is_list = false;
};

struct PlyElement {
    std::string name;
    size_t count = 0;
    std::vector<PlyProperty> props;
};

}  // namespace

TriangleMesh import_mesh(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::Mesh, "cannot open mesh " + path.string());
    std::string line;
    std::getline(is, line);
    if (line != "ply") throw Error(ErrorCode::Mesh, path.string() + ": not a PLY file");
    std::vector<PlyElement> elements;
    bool binary_le = false;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "format") {
            std::string fmt;
            ls >> fmt;
            binary_le = fmt == "binary_little_endian";
        } else if (kw == "element") {
            PlyElement e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (kw == "property") {
            if (elements.empty()) throw Error(ErrorCode::Mesh, "ply: property before element");
            PlyProperty p;
            std::string t;
            ls >> t;
            if (t == "list") {
                p.is_list = true;
                ls >> p.count_type >> p.type >> p.name;
            } else {
                p.type = t;
                ls >> p.name;
            }
            elements.back().props.push_back(p);
        } else if (kw == "end_header") {
            break;
        }
    }
    if (!binary_le) throw Error(ErrorCode::Mesh, path.string() + ": only binary_little_endian PLY is supported");
    const std::vector<char> body((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    size_t off = 0;
    auto need = [&](size_t n) {
        if (off + n > body.size()) throw Error(ErrorCode::Mesh, path.string() + ": truncated PLY body");
    };

    TriangleMesh mesh;
    for (const auto& e : elements) {
        for (size_t i = 0; i < e.count; ++i) {
            Eigen::Vector3d v = Eigen::Vector3d::Zero();
            Eigen::Vector3f c = Eigen::Vector3f::Zero();
            for (const auto& p : e.props) {
                if (p.is_list) {
                    const size_t cs = ply_type_size(p.count_type);
                    need(cs);
                    const auto n = static_cast<size_t>(ply_read_scalar(p.count_type, body.data() + off));
                    off += cs;
                    const size_t es = ply_type_size(p.type);
                    need(n * es);
                    if (e.name == "face" && (p.name == "vertex_indices" || p.name == "vertex_index")) {
                        if (n != 3) throw Error(ErrorCode::Mesh, "ply: only triangle faces are supported");
                        std::array<std::uint32_t, 3> f;
                        for (size_t k = 0; k < 3; ++k)
                            f[k] = static_cast<std::uint32_t>(ply_read_scalar(p.type, body.data() + off + k * es));
                        mesh.faces.push_back(f);
                    }
                    off += n * es;
                    continue;
                }
                const size_t s = ply_type_size(p.type);
                need(s);
                const double val = ply_read_scalar(p.type, body.data() + off);
                off += s;
                if (e.name != "vertex") continue;
                if (p.name == "x") v.x() = val;
                else if (p.name == "y") v.y() = val;
                else if (p.name == "z") v.z() = val;
                else if (p.name == "red") c.x() = static_cast<float>(val / 255.0);
                else if (p.name == "green") c.y() = static_cast<float>(val / 255.0);
                else if (p.name == "blue") c.z() = static_cast<float>(val / 255.0);
            }
            if (e.name == "vertex") {
                mesh.vertices.push_back(v);
                mesh.colors.push_back(c);
            }
        }
    }
    mesh.validate();
    return mesh;
}

}  // namespace roomweave::io
