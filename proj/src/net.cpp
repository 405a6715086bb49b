// SPDX-License-Identifier: Apache-2.0

#include "pcseg/net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pcseg/errors.hpp"
#include "pcseg/rng.hpp"

namespace pcseg {

void Architecture::validate() const {
  if (input_dim != 3 && input_dim != 4) throw ConfigError("input_dim must be 3 or 4");
  if (encoder.empty()) throw ConfigError("encoder needs at least one layer");
  for (auto w : encoder) {
    if (w < 1) throw ConfigError("encoder widths must be >= 1");
  }
  for (auto w : decoder) {
    if (w < 1) throw ConfigError("decoder widths must be >= 1");
  }
  if (output_dim < 1) throw ConfigError("output_dim must be >= 1");
  if (feature_scale.size() != input_dim) {
    throw ConfigError("feature_scale needs one entry per input feature");
  }
  for (float s : feature_scale) {
    if (!std::isfinite(s)) throw ConfigError("feature_scale must be finite");
  }
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors) n += t.data.size();
  return n;
}

Gradients Gradients::zeros_like(const ModelParams& params) {
  Gradients g;
  g.tensors.reserve(params.tensors.size());
  for (const Tensor& t : params.tensors) g.tensors.emplace_back(t.data.size(), 0.0);
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.tensors.size() != tensors.size()) throw ShapeError("gradient layout mismatch");
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    if (other.tensors[k].size() != tensors[k].size()) {
      throw ShapeError("gradient layout mismatch");
    }
    for (std::size_t i = 0; i < tensors[k].size(); ++i) tensors[k][i] += other.tensors[k][i];
  }
  return *this;
}

Gradients& Gradients::operator*=(double scale) {
  for (auto& t : tensors) {
    for (double& v : t) v *= scale;
  }
  return *this;
}

namespace {

// Layer input/output widths in tensor order.
std::vector<std::pair<std::uint32_t, std::uint32_t>> layer_shapes(const Architecture& arch) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
  std::uint32_t in = arch.input_dim;
  for (auto w : arch.encoder) {
    shapes.emplace_back(in, w);
    in = w;
  }
  in = 2 * arch.context_dim();
  for (auto w : arch.decoder) {
    shapes.emplace_back(in, w);
    in = w;
  }
  shapes.emplace_back(in, arch.output_dim);
  return shapes;
}

void check_layout(const ModelParams& params) {
  const auto shapes = layer_shapes(params.arch);
  if (params.tensors.size() != 2 * shapes.size()) {
    throw ShapeError("parameter tensors do not match architecture");
  }
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const Tensor& w = params.tensors[2 * l];
    const Tensor& b = params.tensors[2 * l + 1];
    if (w.rows != shapes[l].second || w.cols != shapes[l].first ||
        w.data.size() != std::size_t{w.rows} * w.cols || b.rows != w.rows ||
        b.cols != 1 || b.data.size() != b.rows) {
      throw ShapeError("layer " + std::to_string(l) + " has the wrong shape");
    }
  }
}

// out = W in + b, optionally followed by ReLU.
void dense(const Tensor& w, const Tensor& b, const double* in, double* out, bool relu) {
  for (std::uint32_t o = 0; o < w.rows; ++o) {
    const float* row = w.data.data() + std::size_t{o} * w.cols;
    double acc = b.data[o];
    for (std::uint32_t i = 0; i < w.cols; ++i) acc += static_cast<double>(row[i]) * in[i];
    out[o] = (relu && acc < 0.0) ? 0.0 : acc;
  }
}

// Accumulates the parameter gradient for one sample and writes the input
// gradient. `delta` is the gradient at the layer output after any ReLU mask.
void dense_backward(const Tensor& w, const double* in, const double* delta,
                    std::vector<double>& dw, std::vector<double>& db, double* din) {
  for (std::uint32_t i = 0; i < w.cols; ++i) din[i] = 0.0;
  for (std::uint32_t o = 0; o < w.rows; ++o) {
    const double d = delta[o];
    if (d == 0.0) continue;
    const float* row = w.data.data() + std::size_t{o} * w.cols;
    double* dw_row = dw.data() + std::size_t{o} * w.cols;
    for (std::uint32_t i = 0; i < w.cols; ++i) {
      dw_row[i] += d * in[i];
      din[i] += static_cast<double>(row[i]) * d;
    }
    db[o] += d;
  }
}

std::vector<double> scaled_input(const Architecture& arch, const Point3& p) {
  const double raw[4] = {p.x, p.y, p.z, p.intensity};
  std::vector<double> x(arch.input_dim);
  for (std::uint32_t i = 0; i < arch.input_dim; ++i) {
    x[i] = static_cast<double>(arch.feature_scale[i]) * raw[i];
  }
  return x;
}

}  // namespace

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  ModelParams params;
  params.arch = arch;
  for (const auto& [in, out] : layer_shapes(arch)) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    Tensor w{out, in, std::vector<float>(std::size_t{out} * in)};
    for (float& v : w.data) v = static_cast<float>(rng.uniform(-bound, bound));
    params.tensors.push_back(std::move(w));
    params.tensors.push_back(Tensor{out, 1, std::vector<float>(out, 0.0f)});
  }
  return params;
}

ForwardTrace forward_trace(const ModelParams& params, std::span<const Point3> points) {
  if (points.empty()) throw EmptyCloudError("forward pass on an empty cloud");
  check_layout(params);
  const Architecture& arch = params.arch;
  const std::size_t P = points.size();
  const std::size_t n_enc = arch.encoder.size();
  const std::size_t n_dec = arch.decoder.size();
  const std::uint32_t C = arch.context_dim();

  ForwardTrace t;
  for (auto w : arch.encoder) t.encoder.emplace_back(P, w);
  for (std::size_t p = 0; p < P; ++p) {
    const auto x = scaled_input(arch, points[p]);
    const double* in = x.data();
    for (std::size_t l = 0; l < n_enc; ++l) {
      double* out = t.encoder[l].row(p).data();
      dense(params.weight(l), params.bias(l), in, out, true);
      in = out;
    }
  }

  const Matrix& features = t.encoder.back();
  t.context.assign(C, 0.0);
  t.argmax.assign(C, 0);
  for (std::uint32_t c = 0; c < C; ++c) {
    double best = features(0, c);
    std::uint32_t arg = 0;
    for (std::size_t p = 1; p < P; ++p) {
      if (features(p, c) > best) {
        best = features(p, c);
        arg = static_cast<std::uint32_t>(p);
      }
    }
    t.context[c] = best;
    t.argmax[c] = arg;
  }

  for (auto w : arch.decoder) t.decoder.emplace_back(P, w);
  t.logits = Matrix(P, arch.output_dim);
  std::vector<double> joined(2 * C);
  std::copy(t.context.begin(), t.context.end(), joined.begin() + C);
  for (std::size_t p = 0; p < P; ++p) {
    const auto f = features.row(p);
    std::copy(f.begin(), f.end(), joined.begin());
    const double* in = joined.data();
    for (std::size_t k = 0; k < n_dec; ++k) {
      double* out = t.decoder[k].row(p).data();
      dense(params.weight(n_enc + k), params.bias(n_enc + k), in, out, true);
      in = out;
    }
    dense(params.weight(n_enc + n_dec), params.bias(n_enc + n_dec), in,
          t.logits.row(p).data(), false);
  }
  return t;
}

Matrix forward(const ModelParams& params, std::span<const Point3> points) {
  return forward_trace(params, points).logits;
}

Matrix softmax(const Matrix& logits) {
  Matrix s(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto in = logits.row(r);
    auto out = s.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - m);
      sum += out[c];
    }
    for (double& v : out) v /= sum;
  }
  return s;
}

Gradients backward(const ModelParams& params, std::span<const Point3> points,
                   const Matrix& dlogits) {
  return backward(params, points, forward_trace(params, points), dlogits);
}

Gradients backward(const ModelParams& params, std::span<const Point3> points,
                   const ForwardTrace& trace, const Matrix& dlogits) {
  const Architecture& arch = params.arch;
  const std::size_t P = points.size();
  if (dlogits.rows != P || dlogits.cols != arch.output_dim ||
      dlogits.data.size() != P * arch.output_dim || trace.logits.rows != P) {
    throw ShapeError("dlogits must be " + std::to_string(P) + " x " +
                     std::to_string(arch.output_dim));
  }
  check_layout(params);
  const std::size_t n_enc = arch.encoder.size();
  const std::size_t n_dec = arch.decoder.size();
  const std::uint32_t C = arch.context_dim();
  Gradients g = Gradients::zeros_like(params);

  // Decoder and head, per point. Collects d(encoder output) and d(context).
  Matrix dfeatures(P, C);
  std::vector<double> dcontext(C, 0.0);
  std::vector<double> joined(2 * C);
  std::copy(trace.context.begin(), trace.context.end(), joined.begin() + C);
  std::vector<double> delta, din;
  for (std::size_t p = 0; p < P; ++p) {
    const auto f = trace.encoder.back().row(p);
    std::copy(f.begin(), f.end(), joined.begin());
    const auto dl = dlogits.row(p);
    delta.assign(dl.begin(), dl.end());
    for (std::size_t k = n_dec + 1; k-- > 0;) {
      const std::size_t layer = n_enc + k;
      const double* in = (k == 0) ? joined.data() : trace.decoder[k - 1].row(p).data();
      if (k < n_dec) {
        const auto act = trace.decoder[k].row(p);
        for (std::size_t o = 0; o < delta.size(); ++o) {
          if (!(act[o] > 0.0)) delta[o] = 0.0;
        }
      }
      din.assign(params.weight(layer).cols, 0.0);
      dense_backward(params.weight(layer), in, delta.data(), g.tensors[2 * layer],
                     g.tensors[2 * layer + 1], din.data());
      delta.swap(din);
    }
    for (std::uint32_t c = 0; c < C; ++c) {
      dfeatures(p, c) = delta[c];
      dcontext[c] += delta[C + c];
    }
  }
  // Max pool routes the context gradient to the selected point.
  for (std::uint32_t c = 0; c < C; ++c) dfeatures(trace.argmax[c], c) += dcontext[c];

  for (std::size_t p = 0; p < P; ++p) {
    const auto df = dfeatures.row(p);
    delta.assign(df.begin(), df.end());
    const auto x = scaled_input(arch, points[p]);
    for (std::size_t l = n_enc; l-- > 0;) {
      const auto act = trace.encoder[l].row(p);
      for (std::size_t o = 0; o < delta.size(); ++o) {
        if (!(act[o] > 0.0)) delta[o] = 0.0;
      }
      const double* in = (l == 0) ? x.data() : trace.encoder[l - 1].row(p).data();
      din.assign(params.weight(l).cols, 0.0);
      dense_backward(params.weight(l), in, delta.data(), g.tensors[2 * l],
                     g.tensors[2 * l + 1], din.data());
      delta.swap(din);
    }
  }
  return g;
}

std::vector<ClassId> predict_labels(const ModelParams& params,
                                    std::span<const Point3> points) {
  const Matrix logits = forward(params, points);
  std::vector<ClassId> labels(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    const auto row = logits.row(p);
    labels[p] = class_id(static_cast<std::size_t>(
        std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return labels;
}

}  // namespace pcseg
