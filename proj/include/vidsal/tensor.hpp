#pragma once

// Dense row-major tensors and the VTEN binary file format.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "vidsal/error.hpp"

namespace vidsal {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

template <class Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), Real(0)) {}
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor filled(Shape shape, Real value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }
  static Tensor scalar(Real value) { return Tensor(Shape{}, std::vector<Real>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const Real> data() const noexcept { return data_; }
  std::span<Real> data() noexcept { return data_; }
  const std::vector<Real>& vector() const noexcept { return data_; }

  Real operator[](std::size_t i) const { return data_[i]; }
  Real& operator[](std::size_t i) { return data_[i]; }

  // Row-major multi-index access; bounds are checked.
  Real at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }
  Real& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

  Real item() const;

  Tensor reshaped(Shape shape) const;

  template <class To>
  Tensor<To> cast() const {
    std::vector<To> out(data_.begin(), data_.end());
    return Tensor<To>(shape_, std::move(out));
  }

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<Real> data_;
};

using TensorF = Tensor<float>;

// VTEN: "VTEN", u8 rank, rank x u32 LE extents, float32 LE row-major payload.
void write_vten(std::ostream& out, const TensorF& tensor);
TensorF read_vten(std::istream& in);
void save_vten(const std::filesystem::path& path, const TensorF& tensor);
TensorF load_vten(const std::filesystem::path& path);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace vidsal
