#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace genvideo {

using Index = Eigen::Index;

template <typename Scalar>
using Plane = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using PlaneXd = Plane<double>;

/// Dense [frames, channels, height, width] stack stored row-major in one
/// contiguous array. Elementwise math goes through values(), which is an
/// Eigen array and composes into expressions; plane(n, c) maps one 2D slice.
template <typename Scalar>
class Tensor4 {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<Plane<Scalar>>;
  using ConstPlaneMap = Eigen::Map<const Plane<Scalar>>;

  Tensor4() = default;

  Tensor4(Index frames, Index channels, Index height, Index width)
      : frames_(frames), channels_(channels), height_(height), width_(width) {
    if (frames < 0 || channels < 0 || height < 0 || width < 0) {
      throw std::invalid_argument("Tensor4: negative dimension");
    }
    values_ = Array::Zero(frames * channels * height * width);
  }

  static Tensor4 constant(Index frames, Index channels, Index height, Index width, Scalar value) {
    Tensor4 out(frames, channels, height, width);
    out.values_.setConstant(value);
    return out;
  }

  Index frames() const { return frames_; }
  Index channels() const { return channels_; }
  Index height() const { return height_; }
  Index width() const { return width_; }
  Index plane_size() const { return height_ * width_; }
  Index frame_size() const { return channels_ * height_ * width_; }
  Index size() const { return values_.size(); }
  bool empty() const { return values_.size() == 0; }

  Array& values() { return values_; }
  const Array& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Scalar& operator()(Index n, Index c, Index y, Index x) { return values_[offset(n, c, y, x)]; }
  Scalar operator()(Index n, Index c, Index y, Index x) const { return values_[offset(n, c, y, x)]; }

  PlaneMap plane(Index n, Index c) {
    return PlaneMap(values_.data() + offset(n, c, 0, 0), height_, width_);
  }
  ConstPlaneMap plane(Index n, Index c) const {
    return ConstPlaneMap(values_.data() + offset(n, c, 0, 0), height_, width_);
  }

  /// Contiguous view of frame n, all channels.
  Eigen::Map<Array> frame_values(Index n) {
    return Eigen::Map<Array>(values_.data() + n * frame_size(), frame_size());
  }
  Eigen::Map<const Array> frame_values(Index n) const {
    return Eigen::Map<const Array>(values_.data() + n * frame_size(), frame_size());
  }

  Tensor4 frame(Index n) const {
    Tensor4 out(1, channels_, height_, width_);
    out.values_ = frame_values(n);
    return out;
  }

  void set_frame(Index n, const Tensor4& src) {
    if (src.frames() != 1 || src.channels() != channels_ || src.height() != height_ ||
        src.width() != width_) {
      throw std::invalid_argument("Tensor4::set_frame: shape mismatch");
    }
    frame_values(n) = src.values();
  }

  template <typename Other>
  bool same_shape(const Tensor4<Other>& other) const {
    return frames_ == other.frames() && channels_ == other.channels() &&
           height_ == other.height() && width_ == other.width();
  }

  template <typename NewScalar>
  Tensor4<NewScalar> cast() const {
    Tensor4<NewScalar> out(frames_, channels_, height_, width_);
    out.values() = values_.template cast<NewScalar>();
    return out;
  }

  std::string shape_string() const {
    return "[" + std::to_string(frames_) + ", " + std::to_string(channels_) + ", " +
           std::to_string(height_) + ", " + std::to_string(width_) + "]";
  }

  friend bool operator==(const Tensor4& a, const Tensor4& b) {
    return a.same_shape(b) && (a.values_ == b.values_).all();
  }

 private:
  Index offset(Index n, Index c, Index y, Index x) const {
    return ((n * channels_ + c) * height_ + y) * width_ + x;
  }

  Index frames_ = 0;
  Index channels_ = 0;
  Index height_ = 0;
  Index width_ = 0;
  Array values_;
};

using Tensor4d = Tensor4<double>;

template <typename Scalar>
void require_same_shape(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_string() +
                                " vs " + b.shape_string());
  }
}

template <typename Scalar>
Scalar max_abs_diff(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
  require_same_shape(a, b, "max_abs_diff");
  if (a.empty()) return Scalar(0);
  return (a.values() - b.values()).abs().maxCoeff();
}

}  // namespace genvideo
