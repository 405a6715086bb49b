// SPDX-License-Identifier: Apache-2.0
//
// Compact point-wise classifier. Every point runs through a shared encoder
// MLP; the column-wise max over all encoded points forms a global context
// vector; a decoder MLP maps concat(point feature, context) to per-class
// logits. Hidden layers use ReLU; the output layer is linear.
//
// Parameters are stored as float32. All arithmetic is carried out in double.

#ifndef PCSEG_NET_HPP_
#define PCSEG_NET_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pcseg/catalog.hpp"
#include "pcseg/geom.hpp"

namespace pcseg {

struct Architecture {
  std::uint32_t input_dim = 4;  // 3: xyz, 4: xyz + intensity
  std::vector<std::uint32_t> encoder{16, 16};
  std::vector<std::uint32_t> decoder{16};
  std::uint32_t output_dim = 6;
  // Per-input multiplier applied before the first layer.
  std::vector<float> feature_scale{0.05f, 0.05f, 1.0f, 1.0f};

  std::uint32_t context_dim() const { return encoder.back(); }
  std::size_t layer_count() const { return encoder.size() + decoder.size() + 1; }
  // Throws ConfigError.
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// Row-major matrix of float32 values.
struct Tensor {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> data;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Tensors are ordered W0, b0, W1, b1, ...: encoder layers, decoder layers,
// then the output layer. Weight matrices are (out x in); biases (out x 1).
struct ModelParams {
  Architecture arch;
  std::vector<Tensor> tensors;

  const Tensor& weight(std::size_t layer) const { return tensors[2 * layer]; }
  const Tensor& bias(std::size_t layer) const { return tensors[2 * layer + 1]; }
  std::size_t parameter_count() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Same layout as ModelParams::tensors, double precision.
struct Gradients {
  std::vector<std::vector<double>> tensors;

  static Gradients zeros_like(const ModelParams& params);
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double scale);
};

// Dense row-major double matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
};

// Weights uniform in +-sqrt(6 / fan_in); biases zero.
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

// Intermediate activations kept for the backward pass.
struct ForwardTrace {
  std::vector<Matrix> encoder;  // post-activation, one per encoder layer (P x w)
  std::vector<double> context;  // C
  std::vector<std::uint32_t> argmax;  // C; lowest point index on ties
  std::vector<Matrix> decoder;  // post-activation, one per decoder layer
  Matrix logits;                // P x N
};

// Throws EmptyCloudError for an empty cloud.
Matrix forward(const ModelParams& params, std::span<const Point3> points);
ForwardTrace forward_trace(const ModelParams& params,
                           std::span<const Point3> points);

// Row-wise softmax with max subtraction.
Matrix softmax(const Matrix& logits);

// Gradients of sum(logits .* dlogits) with respect to every parameter. Throws
// ShapeError when dlogits is not P x N.
Gradients backward(const ModelParams& params, std::span<const Point3> points,
                   const Matrix& dlogits);
Gradients backward(const ModelParams& params, std::span<const Point3> points,
                   const ForwardTrace& trace, const Matrix& dlogits);

// Arg-max class per point, lowest index on ties.
std::vector<ClassId> predict_labels(const ModelParams& params,
                                    std::span<const Point3> points);

}  // namespace pcseg

#endif  // PCSEG_NET_HPP_
