#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hashfield/common.hpp"
#include "hashfield/renderer.hpp"
#include "hashfield/scene.hpp"

namespace hashfield {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Images

inline float quantize8(float v) { return std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f; }

inline void write_ppm(const fs::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot open image for writing: " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.rgb.size());
  for (std::size_t i = 0; i < img.rgb.size(); ++i)
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(img.rgb[i], 0.0f, 1.0f) * 255.0f));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw LoadError("failed writing image: " + path.string());
}

inline Image read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("missing image: " + path.string());
  auto next_token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  if (next_token() != "P6") throw LoadError("not a binary PPM (P6): " + path.string());
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw LoadError("malformed PPM header: " + path.string());
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw LoadError("unsupported PPM geometry: " + path.string());
  Image img(static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(h));
  std::vector<unsigned char> bytes(img.rgb.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw LoadError("truncated PPM payload: " + path.string());
  for (std::size_t i = 0; i < bytes.size(); ++i) img.rgb[i] = static_cast<float>(bytes[i]) / static_cast<float>(maxval);
  return img;
}

/// RGBA PNGs are composited over `background`.
inline Image read_png(const fs::path& path, const Vec3<double>& background = {}) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str()))
    throw LoadError("cannot decode PNG " + path.string() + ": " + png.message);
  png.format = PNG_FORMAT_RGBA;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&png);
    throw LoadError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  Image img(png.width, png.height);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    const float a = buf[p * 4 + 3] / 255.0f;
    for (int c = 0; c < 3; ++c)
      img.rgb[p * 3 + c] = buf[p * 4 + c] / 255.0f * a + static_cast<float>(background[c]) * (1.0f - a);
  }
  return img;
}

inline Image read_image(const fs::path& path, const Vec3<double>& background = {}) {
  const auto ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") return read_png(path, background);
  return read_ppm(path);
}

// ---------------------------------------------------------------------------
// Manifest

inline constexpr double kMaxRotationError = 1e-4;

namespace detail {

inline Pose parse_pose(const nlohmann::json& m, const std::string& where) {
  if (!m.is_array() || m.size() != 4) throw LoadError(where + ": malformed pose (transform_matrix must be 4x4)");
  Pose p{};
  for (int r = 0; r < 4; ++r) {
    if (!m[r].is_array() || m[r].size() != 4) throw LoadError(where + ": malformed pose (transform_matrix must be 4x4)");
    for (int c = 0; c < 4; ++c) {
      if (!m[r][c].is_number()) throw LoadError(where + ": malformed pose (non-numeric entry)");
      p[r][c] = m[r][c].get<double>();
      if (!std::isfinite(p[r][c])) throw LoadError(where + ": malformed pose (non-finite entry)");
    }
  }
  if (p[3][0] != 0.0 || p[3][1] != 0.0 || p[3][2] != 0.0 || p[3][3] != 1.0)
    throw LoadError(where + ": malformed pose (last row must be 0 0 0 1)");
  if (rotation_orthonormality_error(p) > kMaxRotationError || rotation_determinant(p) < 0.0)
    throw LoadError(where + ": non-orthonormal rotation in pose");
  return p;
}

inline fs::path resolve_image(const fs::path& base, const std::string& rel) {
  fs::path p = base / rel;
  if (fs::exists(p) && fs::is_regular_file(p)) return p;
  for (const char* ext : {".png", ".ppm"}) {
    fs::path q = p;
    q += ext;
    if (fs::exists(q)) return q;
  }
  throw LoadError("missing image: " + p.string());
}

inline double number_or(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw LoadError(std::string("manifest: field '") + key + "' must be a number");
  return j[key].get<double>();
}

inline Vec3<double> vec3_from(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw LoadError("manifest: " + what + " must be a 3-array");
  Vec3<double> v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw LoadError("manifest: " + what + " must be numeric");
    v[i] = j[i].get<double>();
  }
  return v;
}

}  // namespace detail

/// Reads a transforms-style JSON manifest; its frames become the scene's training views.
inline Scene load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw LoadError("manifest root must be an object");
  if (!j.contains("frames") || !j["frames"].is_array()) throw LoadError("manifest: missing 'frames' array");
  if (j["frames"].empty()) throw LoadError("empty scene");

  Scene scene;
  if (j.contains("background")) scene.background = detail::vec3_from(j["background"], "background");
  scene.near = detail::number_or(j, "near", scene.near);
  scene.far = detail::number_or(j, "far", scene.far);
  if (!(scene.near > 0.0 && scene.near < scene.far)) throw LoadError("manifest: need 0 < near < far");
  if (j.contains("aabb")) {
    const auto& a = j["aabb"];
    if (!a.is_array() || a.size() != 2) throw LoadError("manifest: aabb must be [[min],[max]]");
    scene.bounds.min = detail::vec3_from(a[0], "aabb min");
    scene.bounds.max = detail::vec3_from(a[1], "aabb max");
    for (int i = 0; i < 3; ++i)
      if (!(scene.bounds.min[i] < scene.bounds.max[i])) throw LoadError("manifest: degenerate aabb");
  }

  const fs::path base = path.parent_path();
  std::uint32_t width = 0, height = 0;
  for (std::size_t i = 0; i < j["frames"].size(); ++i) {
    const auto& f = j["frames"][i];
    const std::string where = "frame " + std::to_string(i);
    if (!f.is_object() || !f.contains("file_path") || !f["file_path"].is_string())
      throw LoadError(where + ": missing file_path");
    if (!f.contains("transform_matrix")) throw LoadError(where + ": malformed pose (missing transform_matrix)");
    View v;
    v.pose = detail::parse_pose(f["transform_matrix"], where);
    v.file_path = f["file_path"].get<std::string>();
    v.image = read_image(detail::resolve_image(base, v.file_path), scene.background);
    if (i == 0) {
      width = v.image.width;
      height = v.image.height;
    } else if (v.image.width != width || v.image.height != height) {
      throw LoadError(where + ": image dimensions differ from the first frame");
    }
    scene.train_views.push_back(std::move(v));
  }

  if (j.contains("w") && detail::number_or(j, "w", 0) != width) throw LoadError("manifest: 'w' does not match images");
  if (j.contains("h") && detail::number_or(j, "h", 0) != height) throw LoadError("manifest: 'h' does not match images");
  double focal = 0.0;
  if (j.contains("fl_x")) {
    focal = detail::number_or(j, "fl_x", 0.0);
  } else if (j.contains("camera_angle_x")) {
    const double angle = detail::number_or(j, "camera_angle_x", 0.0);
    if (!(angle > 0.0 && angle < std::numbers::pi)) throw LoadError("manifest: camera_angle_x out of range");
    focal = 0.5 * width / std::tan(0.5 * angle);
  } else {
    throw LoadError("manifest: missing camera_angle_x");
  }
  if (!(focal > 0.0)) throw LoadError("manifest: focal must be positive");
  scene.intrinsics = Intrinsics::centered(width, height, focal);
  scene.intrinsics.cx = detail::number_or(j, "cx", scene.intrinsics.cx);
  scene.intrinsics.cy = detail::number_or(j, "cy", scene.intrinsics.cy);
  return scene;
}

namespace detail {
inline void write_manifest(const fs::path& dir, const std::string& split, const Scene& scene,
                           const std::vector<View>& views) {
  fs::create_directories(dir / split);
  nlohmann::json j;
  const auto& K = scene.intrinsics;
  j["camera_angle_x"] = 2.0 * std::atan(0.5 * K.width / K.focal);
  j["fl_x"] = K.focal;
  j["w"] = K.width;
  j["h"] = K.height;
  j["cx"] = K.cx;
  j["cy"] = K.cy;
  j["near"] = scene.near;
  j["far"] = scene.far;
  j["aabb"] = {{scene.bounds.min.x, scene.bounds.min.y, scene.bounds.min.z},
               {scene.bounds.max.x, scene.bounds.max.y, scene.bounds.max.z}};
  j["background"] = {scene.background.x, scene.background.y, scene.background.z};
  j["frames"] = nlohmann::json::array();
  for (std::size_t i = 0; i < views.size(); ++i) {
    const std::string rel = "./" + split + "/r_" + std::to_string(i) + ".ppm";
    write_ppm(dir / split / ("r_" + std::to_string(i) + ".ppm"), views[i].image);
    nlohmann::json m = nlohmann::json::array();
    for (const auto& row : views[i].pose) m.push_back({row[0], row[1], row[2], row[3]});
    j["frames"].push_back({{"file_path", rel}, {"transform_matrix", m}});
  }
  std::ofstream out(dir / ("transforms_" + split + ".json"));
  out << j.dump(2) << "\n";
  if (!out) throw LoadError("failed writing manifest in " + dir.string());
}
}  // namespace detail

/// Writes transforms_train.json / transforms_test.json plus P6 images under `dir`.
inline void save_scene(const fs::path& dir, const Scene& scene) {
  fs::create_directories(dir);
  detail::write_manifest(dir, "train", scene, scene.train_views);
  if (!scene.test_views.empty()) detail::write_manifest(dir, "test", scene, scene.test_views);
}

/// A directory is read as transforms_train.json (+ optional transforms_test.json); a file as one manifest.
inline Scene load_scene(const fs::path& path) {
  if (fs::is_directory(path)) {
    Scene s = load_manifest(path / "transforms_train.json");
    if (fs::exists(path / "transforms_test.json")) {
      Scene t = load_manifest(path / "transforms_test.json");
      if (!(t.intrinsics == s.intrinsics)) throw LoadError("test split intrinsics differ from train split");
      s.test_views = std::move(t.train_views);
    }
    return s;
  }
  return load_manifest(path);
}

// ---------------------------------------------------------------------------
// Procedural scenes

struct ToyShape {
  enum class Kind { Sphere, Box } kind = Kind::Sphere;
  Vec3<double> center;       ///< sphere center
  double radius = 0.5;
  Vec3<double> box_min, box_max;
  Vec3<double> color{1.0, 1.0, 1.0};
  double density = 40.0;

  bool contains(const Vec3<double>& p) const {
    if (kind == Kind::Sphere) {
      const auto d = p - center;
      return dot(d, d) <= radius * radius;
    }
    return p.x >= box_min.x && p.x <= box_max.x && p.y >= box_min.y && p.y <= box_max.y && p.z >= box_min.z &&
           p.z <= box_max.z;
  }
};

struct ToySceneSpec {
  std::vector<ToyShape> shapes;
  std::size_t n_views = 8;
  std::size_t n_test_views = 0;
  std::uint32_t image_size = 64;
  double camera_radius = 3.0;
  double camera_angle_x = 0.6911112070083618;
  std::size_t gt_samples = 256;
  Vec3<double> background{0.0, 0.0, 0.0};
};

/// Additive density; color is the density-weighted mean of the covering shapes.
inline std::pair<double, Vec3<double>> toy_field(const std::vector<ToyShape>& shapes, const Vec3<double>& p) {
  double sigma = 0.0;
  Vec3<double> c{};
  for (const auto& s : shapes) {
    if (s.contains(p)) {
      sigma += s.density;
      c += s.color * s.density;
    }
  }
  if (sigma > 0.0) c = c * (1.0 / sigma);
  return {sigma, c};
}

/// Ray-marches the analytic field with midpoint samples between the box entry and exit.
inline Vec3<double> render_toy_ray(const std::vector<ToyShape>& shapes, const Ray& ray, const Scene& scene,
                                   std::size_t n_samples) {
  const auto hit = intersect_aabb(ray, scene.bounds);
  if (!hit) return scene.background;
  const double near = std::max(hit->first, scene.near);
  const double far = std::min(hit->second, scene.far);
  if (!(near < far)) return scene.background;
  std::vector<double> t(n_samples), sigma(n_samples);
  std::vector<Vec3<double>> color(n_samples);
  std::mt19937_64 unused(0);
  sample_along_ray(near, far, n_samples, false, unused, std::span<double>(t));
  for (std::size_t k = 0; k < n_samples; ++k) std::tie(sigma[k], color[k]) = toy_field(shapes, ray.at(t[k]));
  return composite<double>(t, sigma, color, far, scene.background);
}

inline Pose look_at(const Vec3<double>& eye, const Vec3<double>& target) {
  const Vec3<double> back = normalized(eye - target);  // camera +z
  Vec3<double> up{0.0, 0.0, 1.0};
  if (std::abs(dot(up, back)) > 0.999) up = {0.0, 1.0, 0.0};
  const Vec3<double> right = normalized(cross(up, back));
  const Vec3<double> cam_up = cross(back, right);
  Pose p = identity_pose();
  for (int r = 0; r < 3; ++r) {
    p[r][0] = right[r];
    p[r][1] = cam_up[r];
    p[r][2] = back[r];
    p[r][3] = eye[r];
  }
  return p;
}

/// Renders `n` views from a Fibonacci lattice on a sphere, rotated by a seed-derived azimuth.
inline std::vector<View> render_toy_views(const ToySceneSpec& spec, const Scene& scene, std::size_t n,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double phase = 2.0 * std::numbers::pi * uniform01(rng);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<View> views;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * (static_cast<double>(i) + 0.5)) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = phase + golden * static_cast<double>(i);
    const Vec3<double> eye = Vec3<double>{r * std::cos(phi), r * std::sin(phi), z} * spec.camera_radius;
    View v;
    v.pose = look_at(eye, {0.0, 0.0, 0.0});
    v.image = Image(scene.intrinsics.width, scene.intrinsics.height);
    for (std::uint32_t y = 0; y < v.image.height; ++y) {
      for (std::uint32_t x = 0; x < v.image.width; ++x) {
        const Ray ray = pixel_to_ray(x, y, scene.intrinsics, v.pose);
        const auto c = render_toy_ray(spec.shapes, ray, scene, spec.gt_samples);
        v.image.set(x, y, {quantize8(static_cast<float>(c.x)), quantize8(static_cast<float>(c.y)),
                           quantize8(static_cast<float>(c.z))});
      }
    }
    views.push_back(std::move(v));
  }
  return views;
}

/// Ground-truth images are quantized to 8 bits so that a save/load round trip is exact.
inline Scene generate_toy_scene(const ToySceneSpec& spec, std::uint64_t rng_seed) {
  require(spec.n_views >= 1, "generate_toy_scene: need at least one view");
  require(spec.image_size >= 1, "generate_toy_scene: image size must be positive");
  Scene scene;
  scene.intrinsics = Intrinsics::centered(spec.image_size, spec.image_size,
                                          0.5 * spec.image_size / std::tan(0.5 * spec.camera_angle_x));
  scene.bounds = Aabb{};
  scene.near = std::max(0.05, spec.camera_radius - 2.0);
  scene.far = spec.camera_radius + 2.0;
  scene.background = spec.background;
  scene.train_views = render_toy_views(spec, scene, spec.n_views, rng_seed);
  if (spec.n_test_views > 0) scene.test_views = render_toy_views(spec, scene, spec.n_test_views, mix_seed(rng_seed, 1));
  return scene;
}

/// Named procedural scenes: sphere, two_spheres, sphere_box, empty.
inline ToySceneSpec toy_preset(const std::string& name) {
  ToySceneSpec spec;
  if (name == "sphere") {
    ToyShape s;
    s.center = {0.0, 0.0, 0.0};
    s.radius = 0.5;
    s.color = {0.9, 0.35, 0.2};
    spec.shapes = {s};
  } else if (name == "two_spheres") {
    ToyShape a, b;
    a.center = {-0.35, 0.0, 0.0};
    a.radius = 0.4;
    a.color = {0.2, 0.6, 0.9};
    b.center = {0.4, 0.2, 0.1};
    b.radius = 0.3;
    b.color = {0.9, 0.8, 0.2};
    spec.shapes = {a, b};
  } else if (name == "sphere_box") {
    ToyShape s, b;
    s.center = {0.0, 0.0, 0.3};
    s.radius = 0.35;
    s.color = {0.8, 0.2, 0.3};
    b.kind = ToyShape::Kind::Box;
    b.box_min = {-0.6, -0.6, -0.6};
    b.box_max = {0.6, 0.6, -0.2};
    b.color = {0.3, 0.8, 0.4};
    spec.shapes = {s, b};
  } else if (name == "empty") {
    spec.shapes = {};
  } else {
    throw LoadError("unknown toy scene '" + name + "'");
  }
  return spec;
}

/// `toy:<name>` selects a procedural preset; anything else is a manifest path.
inline Scene resolve_scene(const std::string& source, std::size_t n_views, std::uint32_t image_size,
                           std::uint64_t seed, std::size_t n_test_views = 0) {
  constexpr std::string_view prefix = "toy:";
  if (source.rfind(prefix, 0) == 0) {
    ToySceneSpec spec = toy_preset(source.substr(prefix.size()));
    spec.n_views = n_views;
    spec.image_size = image_size;
    spec.n_test_views = n_test_views;
    return generate_toy_scene(spec, seed);
  }
  if (!fs::exists(source)) throw LoadError("scene path does not exist: " + source);
  return load_scene(source);
}

}  // namespace hashfield
