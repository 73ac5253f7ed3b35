#include "meshcorr/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace meshcorr {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace {

constexpr char kImageMagic[4] = {'M', 'C', 'I', '1'};
constexpr char kStackMagic[4] = {'M', 'C', 'S', '1'};
constexpr char kCheckpointMagic[4] = {'M', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

void write_raw(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_raw(std::ifstream& in, void* p, std::size_t n, const std::string& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw std::runtime_error("truncated file: " + path);
}

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  write_raw(out, &v, sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v;
  read_raw(in, &v, sizeof(T), path);
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return in;
}

void check_magic(std::ifstream& in, const char expect[4], const std::string& path) {
  char magic[4];
  read_raw(in, magic, 4, path);
  if (std::memcmp(magic, expect, 4) != 0)
    throw std::runtime_error("bad magic in " + path);
}

struct ImageHeader {
  std::uint32_t version, dtype, channels, height, width;
};

void write_image_header(std::ofstream& out, std::uint32_t dtype, std::uint32_t channels,
                        std::uint32_t height, std::uint32_t width) {
  write_raw(out, kImageMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, dtype);
  write_pod(out, channels);
  write_pod(out, height);
  write_pod(out, width);
}

ImageHeader read_image_header(std::ifstream& in, const std::string& path) {
  check_magic(in, kImageMagic, path);
  ImageHeader h;
  h.version = read_pod<std::uint32_t>(in, path);
  if (h.version != kVersion) throw std::runtime_error("unsupported image version in " + path);
  h.dtype = read_pod<std::uint32_t>(in, path);
  h.channels = read_pod<std::uint32_t>(in, path);
  h.height = read_pod<std::uint32_t>(in, path);
  h.width = read_pod<std::uint32_t>(in, path);
  return h;
}

}  // namespace

void write_float_image(const std::string& path, const std::vector<const ImageF*>& planes) {
  if (planes.empty()) throw std::invalid_argument("write_float_image: no planes");
  auto out = open_out(path);
  const int w = planes[0]->width(), h = planes[0]->height();
  write_image_header(out, 0, static_cast<std::uint32_t>(planes.size()),
                     static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w));
  for (const ImageF* p : planes) {
    if (!p->same_shape(w, h)) throw std::invalid_argument("write_float_image: shape mismatch");
    write_raw(out, p->data(), p->size() * sizeof(float));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_float_image(const std::string& path, const ImageF& image) {
  write_float_image(path, std::vector<const ImageF*>{&image});
}

std::vector<ImageF> read_float_image(const std::string& path) {
  auto in = open_in(path);
  const ImageHeader h = read_image_header(in, path);
  if (h.dtype != 0) throw std::runtime_error("expected f32 image in " + path);
  std::vector<ImageF> planes;
  planes.reserve(h.channels);
  for (std::uint32_t c = 0; c < h.channels; ++c) {
    ImageF img(static_cast<int>(h.width), static_cast<int>(h.height));
    read_raw(in, img.data(), img.size() * sizeof(float), path);
    planes.push_back(std::move(img));
  }
  return planes;
}

void write_id_image(const std::string& path, const ImageU64& image) {
  auto out = open_out(path);
  write_image_header(out, 1, 1, static_cast<std::uint32_t>(image.height()),
                     static_cast<std::uint32_t>(image.width()));
  write_raw(out, image.data(), image.size() * sizeof(std::uint64_t));
  if (!out) throw std::runtime_error("write failed: " + path);
}

ImageU64 read_id_image(const std::string& path) {
  auto in = open_in(path);
  const ImageHeader h = read_image_header(in, path);
  if (h.dtype != 1 || h.channels != 1) throw std::runtime_error("expected id image in " + path);
  ImageU64 img(static_cast<int>(h.width), static_cast<int>(h.height));
  read_raw(in, img.data(), img.size() * sizeof(std::uint64_t), path);
  return img;
}

void write_stack(const std::string& path, const MeshFeatureStack& stack) {
  auto out = open_out(path);
  write_raw(out, kStackMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint32_t>(stack.height()));
  write_pod(out, static_cast<std::uint32_t>(stack.width()));
  write_pod(out, stack.camera.fx);
  write_pod(out, stack.camera.fy);
  write_pod(out, stack.camera.cx);
  write_pod(out, stack.camera.cy);
  write_pod(out, static_cast<std::uint32_t>(stack.camera.width));
  write_pod(out, static_cast<std::uint32_t>(stack.camera.height));
  write_raw(out, stack.pose.rotation.m.data(), 9 * sizeof(double));
  write_pod(out, stack.pose.translation.x);
  write_pod(out, stack.pose.translation.y);
  write_pod(out, stack.pose.translation.z);
  for (const ImageF* plane : {&stack.inverse_depth, &stack.normal_x, &stack.normal_y,
                              &stack.normal_z, &stack.area, &stack.edge_ratio, &stack.cam_angle})
    write_raw(out, plane->data(), plane->size() * sizeof(float));
  write_raw(out, stack.triangle_id.data(), stack.triangle_id.size() * sizeof(std::uint64_t));
  write_raw(out, stack.valid.data(), stack.valid.size());
  if (!out) throw std::runtime_error("write failed: " + path);
}

MeshFeatureStack read_stack(const std::string& path) {
  auto in = open_in(path);
  check_magic(in, kStackMagic, path);
  if (read_pod<std::uint32_t>(in, path) != kVersion)
    throw std::runtime_error("unsupported stack version in " + path);
  const int h = static_cast<int>(read_pod<std::uint32_t>(in, path));
  const int w = static_cast<int>(read_pod<std::uint32_t>(in, path));
  MeshFeatureStack stack;
  stack.camera.fx = read_pod<double>(in, path);
  stack.camera.fy = read_pod<double>(in, path);
  stack.camera.cx = read_pod<double>(in, path);
  stack.camera.cy = read_pod<double>(in, path);
  stack.camera.width = static_cast<int>(read_pod<std::uint32_t>(in, path));
  stack.camera.height = static_cast<int>(read_pod<std::uint32_t>(in, path));
  read_raw(in, stack.pose.rotation.m.data(), 9 * sizeof(double), path);
  stack.pose.translation.x = read_pod<double>(in, path);
  stack.pose.translation.y = read_pod<double>(in, path);
  stack.pose.translation.z = read_pod<double>(in, path);
  for (ImageF* plane : {&stack.inverse_depth, &stack.normal_x, &stack.normal_y, &stack.normal_z,
                        &stack.area, &stack.edge_ratio, &stack.cam_angle}) {
    *plane = ImageF(w, h);
    read_raw(in, plane->data(), plane->size() * sizeof(float), path);
  }
  stack.triangle_id = ImageU64(w, h);
  read_raw(in, stack.triangle_id.data(), stack.triangle_id.size() * sizeof(std::uint64_t), path);
  stack.valid = ImageU8(w, h);
  read_raw(in, stack.valid.data(), stack.valid.size(), path);
  return stack;
}

void write_pgm(const std::string& path, const ImageF& image, float lo, float hi) {
  if (lo == hi) {
    lo = image.size() ? *std::min_element(image.data(), image.data() + image.size()) : 0.0f;
    hi = image.size() ? *std::max_element(image.data(), image.data() + image.size()) : 1.0f;
    if (lo == hi) hi = lo + 1.0f;
  }
  auto out = open_out(path);
  out << "P5\n" << image.width() << " " << image.height() << "\n255\n";
  const float scale = 255.0f / (hi - lo);
  std::vector<unsigned char> row(static_cast<std::size_t>(image.width()));
  for (int v = 0; v < image.height(); ++v) {
    for (int u = 0; u < image.width(); ++u) {
      const float x = std::clamp((image.at(u, v) - lo) * scale, 0.0f, 255.0f);
      row[static_cast<std::size_t>(u)] = static_cast<unsigned char>(x + 0.5f);
    }
    write_raw(out, row.data(), row.size());
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_pgm(const std::string& path, const ImageU8& mask) {
  auto out = open_out(path);
  out << "P5\n" << mask.width() << " " << mask.height() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(mask.width()));
  for (int v = 0; v < mask.height(); ++v) {
    for (int u = 0; u < mask.width(); ++u)
      row[static_cast<std::size_t>(u)] = mask.at(u, v) ? 255 : 0;
    write_raw(out, row.data(), row.size());
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void save_checkpoint(const std::string& path, const CorrectionNetF& net, const AdamState* adam,
                     std::int64_t train_step) {
  auto out = open_out(path);
  write_raw(out, kCheckpointMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, net.spec_digest());
  write_pod(out, static_cast<std::uint32_t>(net.config().multiplier));
  write_pod(out, static_cast<std::uint32_t>(net.config().in_channels));
  write_pod(out, static_cast<std::uint32_t>(net.config().height));
  write_pod(out, static_cast<std::uint32_t>(net.config().width));
  write_pod(out, static_cast<std::uint64_t>(net.param_count()));
  write_pod(out, train_step);
  const std::uint8_t has_adam = adam ? 1 : 0;
  write_pod(out, has_adam);
  write_raw(out, net.params().data(), net.param_count() * sizeof(float));
  if (adam) {
    write_pod(out, adam->step);
    write_raw(out, adam->m.data(), adam->m.size() * sizeof(double));
    write_raw(out, adam->v.data(), adam->v.size() * sizeof(double));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::int64_t load_checkpoint(const std::string& path, CorrectionNetF& net, AdamState* adam) {
  auto in = open_in(path);
  check_magic(in, kCheckpointMagic, path);
  if (read_pod<std::uint32_t>(in, path) != kVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  const std::uint64_t digest = read_pod<std::uint64_t>(in, path);
  if (digest != net.spec_digest())
    throw std::runtime_error("checkpoint layer-spec digest mismatch: " + path);
  read_pod<std::uint32_t>(in, path);  // multiplier (informative; covered by digest)
  read_pod<std::uint32_t>(in, path);
  read_pod<std::uint32_t>(in, path);
  read_pod<std::uint32_t>(in, path);
  const std::uint64_t count = read_pod<std::uint64_t>(in, path);
  if (count != net.param_count())
    throw std::runtime_error("checkpoint parameter count mismatch: " + path);
  const std::int64_t train_step = read_pod<std::int64_t>(in, path);
  const std::uint8_t has_adam = read_pod<std::uint8_t>(in, path);
  std::vector<float> params(count);
  read_raw(in, params.data(), count * sizeof(float), path);
  net.set_params(params);
  if (has_adam && adam) {
    adam->resize(count);
    adam->step = read_pod<std::int64_t>(in, path);
    read_raw(in, adam->m.data(), count * sizeof(double), path);
    read_raw(in, adam->v.data(), count * sizeof(double), path);
  }
  return train_step;
}

std::uint64_t fnv1a_bytes(const void* data, std::size_t n, std::uint64_t seed) {
  constexpr std::uint64_t kFnvPrime = 1099511628211ull;
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t fnv1a_file_digest(const std::string& path) {
  auto in = open_in(path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    if (got <= 0) break;
    h = fnv1a_bytes(buf, static_cast<std::size_t>(got), h);
  }
  return h;
}

}  // namespace meshcorr
