// SPDX-License-Identifier: Apache-2.0
#include "uhead/head.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

#include "uhead/binary_io.hpp"
#include "uhead/rng.hpp"

namespace uhead {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T> using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T> using MapMat = Eigen::Map<RowMat<T>>;
template <class T> using CMapMat = Eigen::Map<const RowMat<T>>;
template <class T> using CMapVec = Eigen::Map<const Vec<T>>;

bool all_finite(auto values) {
  return std::all_of(values.begin(), values.end(), [](auto v) { return std::isfinite(v); });
}

void validate_shape(const HeadShape &s) {
  require(s.input_dim >= 1, ErrorCode::InvalidArgument, "head: input_dim must be >= 1");
  require(s.hidden_dim >= 1, ErrorCode::InvalidArgument, "head: hidden_dim must be >= 1");
  require(std::isfinite(s.leaky_slope), ErrorCode::InvalidArgument, "head: leaky_slope not finite");
  require(std::isfinite(s.softplus_beta) && s.softplus_beta > 0, ErrorCode::InvalidArgument,
          "head: softplus_beta must be positive");
  require(std::isfinite(s.softplus_threshold), ErrorCode::InvalidArgument,
          "head: softplus_threshold not finite");
}

} // namespace

template <class T> HeadTensors<T> HeadTensors<T>::zeros(const HeadShape &s) {
  const std::size_t d = s.input_dim, h = s.hidden_dim;
  HeadTensors t;
  t.w1.assign(d * h, T(0));
  t.b1.assign(h, T(0));
  t.w2.assign(h * h, T(0));
  t.b2.assign(h, T(0));
  t.w3.assign(h, T(0));
  t.b3.assign(1, T(0));
  return t;
}

template <class T> std::size_t HeadTensors<T>::parameter_count() const noexcept {
  std::size_t n = 0;
  for (auto t : tensors())
    n += t.size();
  return n;
}

template <class T> bool HeadTensors<T>::congruent(const HeadShape &s) const noexcept {
  const std::size_t d = s.input_dim, h = s.hidden_dim;
  return w1.size() == d * h && b1.size() == h && w2.size() == h * h && b2.size() == h &&
         w3.size() == h && b3.size() == 1;
}

template <class T>
BasicHead<T>::BasicHead(HeadShape shape, HeadTensors<T> params) : BasicHead(shape, std::move(params), false) {}

template <class T>
BasicHead<T> BasicHead<T>::unchecked_for_testing(HeadShape shape, HeadTensors<T> params) {
  return BasicHead(shape, std::move(params), true);
}

template <class T>
BasicHead<T>::BasicHead(HeadShape shape, HeadTensors<T> params, bool allow_zero)
    : shape_(shape), params_(std::move(params)) {
  validate_shape(shape_);
  require(params_.congruent(shape_), ErrorCode::DimensionMismatch,
          "head: parameter tensors do not match (input_dim, hidden_dim, 1)");
  bool any_nonzero = false;
  for (auto t : params_.tensors()) {
    require(all_finite(t), ErrorCode::NonFinite, "head: non-finite parameter");
    any_nonzero = any_nonzero || std::any_of(t.begin(), t.end(), [](T v) { return v != T(0); });
  }
  require(allow_zero || any_nonzero, ErrorCode::InvalidArgument,
          "head: all-zero parameters are rejected (zero-initialized heads do not train)");
}

UncertaintyHead head_init(const HeadShape &shape, std::uint64_t seed) {
  validate_shape(shape);
  auto params = HeadTensors<float>::zeros(shape);
  Rng rng(seed);
  auto fill = [&rng](std::vector<float> &w, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto &v : w)
      v = static_cast<float>(rng.uniform(-bound, bound));
  };
  fill(params.w1, shape.input_dim);
  fill(params.w2, shape.hidden_dim);
  fill(params.w3, shape.hidden_dim);
  return UncertaintyHead(shape, std::move(params));
}

UncertaintyHead head_init(std::uint32_t input_dim, std::uint32_t hidden_dim, std::uint64_t seed) {
  HeadShape shape;
  shape.input_dim = input_dim;
  shape.hidden_dim = hidden_dim;
  return head_init(shape, seed);
}

UncertaintyHead64 to_double(const UncertaintyHead &head) {
  HeadTensors<double> p;
  auto src = head.params().tensors();
  auto cvt = [](std::span<const float> s) { return std::vector<double>(s.begin(), s.end()); };
  p.w1 = cvt(src[0]);
  p.b1 = cvt(src[1]);
  p.w2 = cvt(src[2]);
  p.b2 = cvt(src[3]);
  p.w3 = cvt(src[4]);
  p.b3 = cvt(src[5]);
  return UncertaintyHead64::unchecked_for_testing(head.shape(), std::move(p));
}

template <class T> T softplus(T z, T beta, T threshold) noexcept {
  const T bz = beta * z;
  if (bz > threshold)
    return z;
  return std::log1p(std::exp(bz)) / beta;
}

template <class T> T softplus_grad(T z, T beta, T threshold) noexcept {
  const T bz = beta * z;
  if (bz > threshold)
    return T(1);
  return T(1) / (T(1) + std::exp(-bz));
}

template <class T>
ForwardResult<T> head_forward(const BasicHead<T> &head, std::type_identity_t<MatrixView<const T>> batch) {
  const auto &s = head.shape();
  const auto &p = head.params();
  require(batch.cols() == s.input_dim, ErrorCode::DimensionMismatch,
          "head_forward: batch has " + std::to_string(batch.cols()) + " columns, head expects " +
              std::to_string(s.input_dim));
  require(all_finite(batch.data()), ErrorCode::NonFinite, "head_forward: non-finite input");

  const std::size_t n = batch.rows(), h = s.hidden_dim;
  const T slope = static_cast<T>(s.leaky_slope);
  ForwardResult<T> r;
  auto &c = r.cache;
  c.input = Matrix<T>(n, s.input_dim, std::vector<T>(batch.data().begin(), batch.data().end()));
  c.z1 = Matrix<T>(n, h);
  c.a1 = Matrix<T>(n, h);
  c.z2 = Matrix<T>(n, h);
  c.a2 = Matrix<T>(n, h);
  c.z3.assign(n, T(0));
  r.output.assign(n, T(0));

  CMapMat<T> x(c.input.data().data(), n, s.input_dim);
  CMapMat<T> w1(p.w1.data(), s.input_dim, h), w2(p.w2.data(), h, h);
  CMapVec<T> b1(p.b1.data(), h), b2(p.b2.data(), h), w3(p.w3.data(), h);
  MapMat<T> z1(c.z1.data().data(), n, h), a1(c.a1.data().data(), n, h);
  MapMat<T> z2(c.z2.data().data(), n, h), a2(c.a2.data().data(), n, h);
  Eigen::Map<Vec<T>> z3(c.z3.data(), n);

  z1.noalias() = x * w1;
  z1.rowwise() += b1.transpose();
  a1 = z1.unaryExpr([slope](T v) { return leaky_relu(v, slope); });
  z2.noalias() = a1 * w2;
  z2.rowwise() += b2.transpose();
  a2 = z2.unaryExpr([slope](T v) { return leaky_relu(v, slope); });
  z3.noalias() = a2 * w3;
  z3.array() += p.b3[0];

  const T beta = static_cast<T>(s.softplus_beta), thr = static_cast<T>(s.softplus_threshold);
  for (std::size_t i = 0; i < n; ++i)
    r.output[i] = softplus(c.z3[i], beta, thr);
  return r;
}

template <class T> std::vector<T> head_predict(const BasicHead<T> &head, std::type_identity_t<MatrixView<const T>> batch) {
  return head_forward(head, batch).output;
}

template <class T>
HeadTensors<T> head_backward(const BasicHead<T> &head, const ForwardCache<T> &c,
                             std::span<const T> output_grad) {
  const auto &s = head.shape();
  const auto &p = head.params();
  const std::size_t n = c.z3.size(), h = s.hidden_dim, d = s.input_dim;
  require(c.input.rows() == n && c.input.cols() == d && c.z1.rows() == n && c.z1.cols() == h &&
              c.a1.rows() == n && c.a1.cols() == h && c.z2.rows() == n && c.z2.cols() == h &&
              c.a2.rows() == n && c.a2.cols() == h,
          ErrorCode::DimensionMismatch, "head_backward: activations do not match the head");
  require(output_grad.size() == n, ErrorCode::DimensionMismatch,
          "head_backward: output_grad length differs from batch size");

  const T slope = static_cast<T>(s.leaky_slope);
  const T beta = static_cast<T>(s.softplus_beta), thr = static_cast<T>(s.softplus_threshold);

  auto g = HeadTensors<T>::zeros(s);
  Vec<T> dz3(n);
  for (std::size_t i = 0; i < n; ++i)
    dz3[i] = output_grad[i] * softplus_grad(c.z3[i], beta, thr);

  CMapMat<T> x(c.input.data().data(), n, d);
  CMapMat<T> z1(c.z1.data().data(), n, h), a1(c.a1.data().data(), n, h);
  CMapMat<T> z2(c.z2.data().data(), n, h), a2(c.a2.data().data(), n, h);
  CMapMat<T> w2(p.w2.data(), h, h);
  CMapVec<T> w3(p.w3.data(), h);

  Eigen::Map<Vec<T>>(g.w3.data(), h).noalias() = a2.transpose() * dz3;
  g.b3[0] = dz3.sum();

  RowMat<T> dz2 = dz3 * w3.transpose();
  dz2.array() *= z2.unaryExpr([slope](T v) { return leaky_relu_grad(v, slope); }).array();
  MapMat<T>(g.w2.data(), h, h).noalias() = a1.transpose() * dz2;
  Eigen::Map<Vec<T>>(g.b2.data(), h) = dz2.colwise().sum().transpose();

  RowMat<T> dz1 = dz2 * w2.transpose();
  dz1.array() *= z1.unaryExpr([slope](T v) { return leaky_relu_grad(v, slope); }).array();
  MapMat<T>(g.w1.data(), d, h).noalias() = x.transpose() * dz1;
  Eigen::Map<Vec<T>>(g.b1.data(), h) = dz1.colwise().sum().transpose();

  for (auto t : g.tensors())
    require(all_finite(t), ErrorCode::NonFinite, "head_backward: non-finite gradient");
  return g;
}

std::vector<std::byte> encode_checkpoint(const UncertaintyHead &head) {
  const auto &s = head.shape();
  ByteWriter w;
  w.put_bytes(std::as_bytes(std::span("UHED", 4)));
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint32_t>(s.input_dim);
  w.put<std::uint32_t>(s.hidden_dim);
  w.put<float>(s.leaky_slope);
  w.put<float>(s.softplus_beta);
  w.put<float>(s.softplus_threshold);
  for (auto t : head.params().tensors())
    w.put_array(t);
  return w.take();
}

UncertaintyHead decode_checkpoint(std::span<const std::byte> bytes) {
  require(bytes.size() >= kCheckpointHeaderBytes, ErrorCode::Corrupt,
          "checkpoint: file shorter than header (" + std::to_string(bytes.size()) + " bytes)");
  require(std::memcmp(bytes.data(), "UHED", 4) == 0, ErrorCode::Corrupt, "checkpoint: bad magic");
  ByteReader r(bytes.subspan(4));
  const auto version = r.get<std::uint16_t>();
  require(version == kCheckpointVersion, ErrorCode::Corrupt,
          "checkpoint: unsupported version " + std::to_string(version));
  HeadShape s;
  s.input_dim = r.get<std::uint32_t>();
  s.hidden_dim = r.get<std::uint32_t>();
  s.leaky_slope = r.get<float>();
  s.softplus_beta = r.get<float>();
  s.softplus_threshold = r.get<float>();
  require(s.input_dim >= 1 && s.hidden_dim >= 1, ErrorCode::Corrupt, "checkpoint: zero dimension");
  auto params = HeadTensors<float>::zeros(s);
  const std::size_t expected = kCheckpointHeaderBytes + params.parameter_count() * sizeof(float);
  require(bytes.size() == expected, ErrorCode::Corrupt,
          "checkpoint: expected " + std::to_string(expected) + " bytes, found " +
              std::to_string(bytes.size()));
  for (auto t : params.tensors())
    r.get_array(t);
  return UncertaintyHead(s, std::move(params));
}

void save_checkpoint(const UncertaintyHead &head, const std::filesystem::path &path) {
  write_file_atomic(path, encode_checkpoint(head));
}

UncertaintyHead load_checkpoint(const std::filesystem::path &path) {
  return decode_checkpoint(read_file(path));
}

template struct HeadTensors<float>;
template struct HeadTensors<double>;
template class BasicHead<float>;
template class BasicHead<double>;
template float softplus(float, float, float) noexcept;
template double softplus(double, double, double) noexcept;
template float softplus_grad(float, float, float) noexcept;
template double softplus_grad(double, double, double) noexcept;
template ForwardResult<float> head_forward(const BasicHead<float> &, MatrixView<const float>);
template ForwardResult<double> head_forward(const BasicHead<double> &, MatrixView<const double>);
template std::vector<float> head_predict(const BasicHead<float> &, MatrixView<const float>);
template std::vector<double> head_predict(const BasicHead<double> &, MatrixView<const double>);
template HeadTensors<float> head_backward(const BasicHead<float> &, const ForwardCache<float> &,
                                          std::span<const float>);
template HeadTensors<double> head_backward(const BasicHead<double> &, const ForwardCache<double> &,
                                           std::span<const double>);

} // namespace uhead
