#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshcorr {

// Dense single-channel image, row-major. Pixel (u, v): u along width,
// v along height, pixel centers at integer coordinates.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {
    if (width < 0 || height < 0) throw std::invalid_argument("Image: negative size");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int u, int v) { return data_[static_cast<std::size_t>(v) * width_ + u]; }
  const T& at(int u, int v) const { return data_[static_cast<std::size_t>(v) * width_ + u]; }

  T* row(int v) { return data_.data() + static_cast<std::size_t>(v) * width_; }
  const T* row(int v) const { return data_.data() + static_cast<std::size_t>(v) * width_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool same_shape(int w, int h) const { return width_ == w && height_ == h; }
  template <typename U>
  bool same_shape(const Image<U>& o) const {
    return same_shape(o.width(), o.height());
  }

  void fill(T value) { data_.assign(data_.size(), value); }

  bool operator==(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ && data_ == o.data_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using ImageF = Image<float>;
using ImageU8 = Image<std::uint8_t>;
using ImageU64 = Image<std::uint64_t>;

// Sub-pixel sample location in image coordinates.
struct Pix2 {
  float u = 0.0f;
  float v = 0.0f;
  bool operator==(const Pix2&) const = default;
};

using ImageV2 = Image<Pix2>;

template <typename A, typename B>
void require_same_shape(const Image<A>& a, const Image<B>& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace meshcorr
