// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <type_traits>
#include <vector>

#include "uhead/matrix.hpp"

namespace uhead {

/// Fixed architecture of the uncertainty head:
///   Linear(input_dim, hidden) -> LeakyReLU -> Linear(hidden, hidden)
///   -> LeakyReLU -> Linear(hidden, 1) -> Softplus(beta, threshold)
struct HeadShape {
  std::uint32_t input_dim = 0;
  std::uint32_t hidden_dim = 512;
  float leaky_slope = 0.01f;
  float softplus_beta = 1.0f;
  float softplus_threshold = 20.0f;

  bool operator==(const HeadShape &) const = default;
};

/// One buffer per parameter tensor, in declaration order. Weights are
/// stored row-major as (fan_in x fan_out), so w1 is input_dim x hidden_dim.
template <class T> struct HeadTensors {
  std::vector<T> w1, b1, w2, b2, w3, b3;

  static HeadTensors zeros(const HeadShape &shape);

  std::array<std::span<T>, 6> tensors() noexcept { return {w1, b1, w2, b2, w3, b3}; }
  std::array<std::span<const T>, 6> tensors() const noexcept {
    return {std::span<const T>(w1), std::span<const T>(b1), std::span<const T>(w2),
            std::span<const T>(b2), std::span<const T>(w3), std::span<const T>(b3)};
  }
  std::size_t parameter_count() const noexcept;
  bool congruent(const HeadShape &shape) const noexcept;

  bool operator==(const HeadTensors &) const = default;
};

template <class T> class BasicHead {
public:
  /// Validates shapes, hyperparameters and rejects an all-zero parameter set
  /// (a zero-initialized head has identical hidden units and never trains).
  BasicHead(HeadShape shape, HeadTensors<T> params);

  /// Test hook: skips the all-zero check, nothing else.
  static BasicHead unchecked_for_testing(HeadShape shape, HeadTensors<T> params);

  const HeadShape &shape() const noexcept { return shape_; }
  const HeadTensors<T> &params() const noexcept { return params_; }
  HeadTensors<T> &mutable_params() noexcept { return params_; }

  bool operator==(const BasicHead &) const = default;

private:
  BasicHead(HeadShape shape, HeadTensors<T> params, bool allow_zero);

  HeadShape shape_;
  HeadTensors<T> params_;
};

using UncertaintyHead = BasicHead<float>;
/// 64-bit shadow used for finite-difference gradient checks.
using UncertaintyHead64 = BasicHead<double>;
using HeadGradients = HeadTensors<float>;

UncertaintyHead head_init(std::uint32_t input_dim, std::uint32_t hidden_dim, std::uint64_t seed);
UncertaintyHead head_init(const HeadShape &shape, std::uint64_t seed);

UncertaintyHead64 to_double(const UncertaintyHead &head);

/// Activations retained by the forward pass; enough for an exact backward.
template <class T> struct ForwardCache {
  Matrix<T> input;  // n x input_dim
  Matrix<T> z1, a1; // n x hidden
  Matrix<T> z2, a2; // n x hidden
  std::vector<T> z3;
};

template <class T> struct ForwardResult {
  std::vector<T> output;
  ForwardCache<T> cache;
};

template <class T> T softplus(T z, T beta, T threshold) noexcept;
template <class T> T softplus_grad(T z, T beta, T threshold) noexcept;
template <class T> T leaky_relu(T z, T slope) noexcept { return z > T(0) ? z : slope * z; }
/// Derivative at exactly 0 is `slope`.
template <class T> T leaky_relu_grad(T z, T slope) noexcept { return z > T(0) ? T(1) : slope; }

template <class T>
ForwardResult<T> head_forward(const BasicHead<T> &head, std::type_identity_t<MatrixView<const T>> batch);

/// Forward pass without retained activations (inference).
template <class T> std::vector<T> head_predict(const BasicHead<T> &head, std::type_identity_t<MatrixView<const T>> batch);

template <class T>
HeadTensors<T> head_backward(const BasicHead<T> &head, const ForwardCache<T> &cache,
                             std::span<const T> output_grad);

// Checkpoint format: "UHED", u16 version, u32 input_dim, u32 hidden_dim,
// f32 leaky_slope, f32 softplus_beta, f32 softplus_threshold, then
// w1 b1 w2 b2 w3 b3 as little-endian f32, row-major.
inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderBytes = 4 + 2 + 4 + 4 + 4 + 4 + 4;

std::vector<std::byte> encode_checkpoint(const UncertaintyHead &head);
UncertaintyHead decode_checkpoint(std::span<const std::byte> bytes);
void save_checkpoint(const UncertaintyHead &head, const std::filesystem::path &path);
UncertaintyHead load_checkpoint(const std::filesystem::path &path);

} // namespace uhead
