#pragma once

// Small dense-network engine: tanh MLPs with typed output heads, exact
// reverse-mode gradients, Adam, soft target updates, and a flat binary
// checkpoint format.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sagin/core.hpp"

namespace sagin::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised when a gradient, loss or output is not finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class HeadKind : std::uint8_t { Identity, Sigmoid, Softmax };

/// Transform applied to a contiguous segment of the output layer.
struct OutputHead {
  HeadKind kind{HeadKind::Identity};
  int begin{};
  int size{};

  friend bool operator==(const OutputHead&, const OutputHead&) = default;
};

struct LayerShape {
  int in{};
  int out{};

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

class DenseNet {
 public:
  /// `widths` lists every layer width including input and output. Parameters
  /// are drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  DenseNet(const std::vector<int>& widths, std::vector<OutputHead> heads, Rng& rng);
  static DenseNet zeros(const std::vector<int>& widths, std::vector<OutputHead> heads);

  int input_size() const { return shapes_.front().in; }
  int output_size() const { return shapes_.back().out; }
  int layer_count() const { return static_cast<int>(shapes_.size()); }
  const std::vector<LayerShape>& layer_shapes() const { return shapes_; }
  const std::vector<OutputHead>& heads() const { return heads_; }
  std::size_t parameter_count() const { return weights_.size() + biases_.size(); }

  std::span<const double> weights() const { return weights_; }
  std::span<const double> biases() const { return biases_; }
  /// Mutable access bumps the version, invalidating outstanding caches.
  std::span<double> mutable_weights();
  std::span<double> mutable_biases();

  Eigen::Map<const RowMajorMatrix> weight(int layer) const;
  Eigen::Map<const Vector> bias(int layer) const;

  std::uint64_t version() const { return version_; }
  bool same_shape(const DenseNet& other) const { return shapes_ == other.shapes_ && heads_ == other.heads_; }

 private:
  DenseNet(const std::vector<int>& widths, std::vector<OutputHead> heads);
  void index_layers();

  std::vector<LayerShape> shapes_;
  std::vector<OutputHead> heads_;
  std::vector<double> weights_;  // layer-major, each layer row-major (out x in)
  std::vector<double> biases_;   // layer-major
  std::vector<std::size_t> weight_offsets_;
  std::vector<std::size_t> bias_offsets_;
  std::uint64_t version_{0};
};

/// Activations of one forward pass. Columns are batch samples.
struct Cache {
  std::uint64_t net_identity{};
  std::uint64_t net_version{};
  std::vector<Matrix> activations;  // [0] = input, then each hidden tanh output
  Matrix logits;                    // output layer before heads
  Matrix output;                    // after heads
};

struct Gradients {
  std::vector<double> weights;  // same layout as DenseNet::weights()
  std::vector<double> biases;
  Matrix input;  // d(loss)/d(input), one column per sample

  double max_abs() const;
  bool finite() const;
};

Cache forward(const DenseNet& net, const Matrix& input);
Vector forward(const DenseNet& net, std::span<const double> input);

/// Applies the declared heads column-wise to pre-head values.
Matrix apply_heads(const std::vector<OutputHead>& heads, const Matrix& logits);

/// Gradients of sum over the batch of <output_gradient, output>, plus
/// <logit_gradient, logits> when a pre-head gradient is supplied.
Gradients backward(const DenseNet& net, const Cache& cache, const Matrix& output_gradient,
                   const Matrix* logit_gradient = nullptr);

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step_count{0};
  double learning_rate{1e-3};
  double beta1{0.9};
  double beta2{0.999};
  double epsilon{1e-8};

  static AdamState for_net(const DenseNet& net, double learning_rate);
};

/// One bias-corrected Adam descent step. Throws NumericalError (leaving the
/// network and state untouched) when a gradient entry is not finite.
void adam_step(AdamState& state, DenseNet& net, const Gradients& grads);

/// target <- tau * source + (1 - tau) * target, elementwise.
void soft_update(DenseNet& target, const DenseNet& source, double tau);

/// Writes `<stem>.bin` (little-endian float64: all weights, then all biases,
/// layer-major) and `<stem>.desc` (text descriptor).
void save_checkpoint(const DenseNet& net, const std::filesystem::path& stem);
DenseNet load_checkpoint(const std::filesystem::path& stem);

}  // namespace sagin::nn
