#include "vidsal/tensor.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

namespace vidsal {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <class Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " holds " + std::to_string(shape_size(shape_)) +
                     " elements but " + std::to_string(data_.size()) + " were given");
  }
}

template <class Real>
Real Tensor<Real>::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

template <class Real>
Tensor<Real> Tensor<Real>::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <class Real>
bool Tensor<Real>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

template <class Real>
std::size_t Tensor<Real>::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) throw ShapeError("index rank mismatch for " + shape_string(shape_));
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw ShapeError("index out of range for " + shape_string(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

template class Tensor<float>;
template class Tensor<double>;

namespace {

constexpr std::array<char, 4> kMagic{'V', 'T', 'E', 'N'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("VTEN: truncated header");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

}  // namespace

void write_vten(std::ostream& out, const TensorF& tensor) {
  if (tensor.rank() > 255) throw ShapeError("VTEN supports rank <= 255");
  out.write(kMagic.data(), 4);
  out.put(static_cast<char>(tensor.rank()));
  for (std::size_t e : tensor.shape()) {
    if (e > 0xffffffffu) throw ShapeError("VTEN extent exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(e));
  }
  for (float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw IoError("VTEN: write failed");
}

TensorF read_vten(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kMagic) throw IoError("VTEN: bad magic");
  const int rank = in.get();
  if (rank == std::char_traits<char>::eof()) throw IoError("VTEN: truncated header");
  Shape shape(static_cast<std::size_t>(rank));
  for (auto& e : shape) e = get_u32(in);
  std::vector<float> data(shape_size(shape));
  for (auto& v : data) v = std::bit_cast<float>(get_u32(in));
  return TensorF(std::move(shape), std::move(data));
}

void save_vten(const std::filesystem::path& path, const TensorF& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_vten(out, tensor);
}

TensorF load_vten(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_vten(in);
}

}  // namespace vidsal
