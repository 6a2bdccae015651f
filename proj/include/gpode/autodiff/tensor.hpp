#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gpode::ad {

class Tape;
using NodeId = std::int32_t;

// Rank 0 (scalar), 1 (vector) or 2 (row-major matrix).
struct Shape {
  std::uint8_t rank = 0;
  std::array<std::size_t, 2> dims{1, 1};

  static Shape scalar() { return {}; }
  static Shape vector(std::size_t n) { return {1, {n, 1}}; }
  static Shape matrix(std::size_t r, std::size_t c) { return {2, {r, c}}; }

  std::size_t size() const {
    return rank == 0 ? 1 : rank == 1 ? dims[0] : dims[0] * dims[1];
  }
  // Vectors behave as a single row when a matrix view is needed.
  std::size_t rows() const { return rank == 2 ? dims[0] : 1; }
  std::size_t cols() const { return rank == 2 ? dims[1] : rank == 1 ? dims[0] : 1; }

  std::string str() const;
  friend bool operator==(const Shape& a, const Shape& b) {
    return a.rank == b.rank && (a.rank == 0 || (a.dims[0] == b.dims[0] &&
                                                (a.rank == 1 || a.dims[1] == b.dims[1])));
  }
};

// Immutable dense value with an optional node on a tape. Copies share storage.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape::scalar(), {v}); }
  static Tensor zeros(Shape shape) { return Tensor(shape, std::vector<double>(shape.size(), 0.0)); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor(Shape::matrix(rows, cols), std::move(values));
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::size_t size() const { return shape_.size(); }
  std::size_t rows() const { return shape_.rows(); }
  std::size_t cols() const { return shape_.cols(); }

  std::span<const double> values() const { return {data_->data(), data_->size()}; }
  const std::shared_ptr<const std::vector<double>>& storage() const { return data_; }
  double item() const;
  double operator()(std::size_t r, std::size_t c) const { return (*data_)[r * cols() + c]; }
  double operator[](std::size_t i) const { return (*data_)[i]; }

  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  NodeId node() const { return node_; }

  // Same values, no tape.
  Tensor detach() const;

 private:
  friend class Tape;
  Tensor(Shape shape, std::shared_ptr<const std::vector<double>> data, Tape* tape, NodeId node)
      : data_(std::move(data)), shape_(shape), tape_(tape), node_(node) {}

  std::shared_ptr<const std::vector<double>> data_;
  Shape shape_;
  Tape* tape_ = nullptr;
  NodeId node_ = -1;
};

}  // namespace gpode::ad
