#include "sagin/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sagin::nn {

namespace {

constexpr const char* kCheckpointTag = "sagin-densenet-v1";

const char* head_name(HeadKind k) {
  switch (k) {
    case HeadKind::Identity:
      return "identity";
    case HeadKind::Sigmoid:
      return "sigmoid";
    case HeadKind::Softmax:
      return "softmax";
  }
  return "?";
}

HeadKind head_from_name(const std::string& s) {
  if (s == "identity") return HeadKind::Identity;
  if (s == "sigmoid") return HeadKind::Sigmoid;
  if (s == "softmax") return HeadKind::Softmax;
  throw std::runtime_error("unknown output head '" + s + "'");
}

}  // namespace

DenseNet::DenseNet(const std::vector<int>& widths, std::vector<OutputHead> heads) : heads_(std::move(heads)) {
  if (widths.size() < 2) throw ContractViolation("a network needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] < 1 || widths[i + 1] < 1) throw ContractViolation("layer widths must be positive");
    shapes_.push_back({widths[i], widths[i + 1]});
  }
  int covered = 0;
  for (const auto& h : heads_) {
    if (h.begin != covered || h.size < 1) throw ContractViolation("output heads must tile the output layer in order");
    covered += h.size;
  }
  if (heads_.empty()) heads_.push_back({HeadKind::Identity, 0, widths.back()});
  else if (covered != widths.back()) throw ContractViolation("output heads must cover every output unit");
  index_layers();
}

DenseNet::DenseNet(const std::vector<int>& widths, std::vector<OutputHead> heads, Rng& rng)
    : DenseNet(widths, std::move(heads)) {
  for (int l = 0; l < layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shapes_[static_cast<std::size_t>(l)].in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const auto& s = shapes_[static_cast<std::size_t>(l)];
    double* w = weights_.data() + weight_offsets_[static_cast<std::size_t>(l)];
    for (int i = 0; i < s.in * s.out; ++i) w[i] = dist(rng);
    double* b = biases_.data() + bias_offsets_[static_cast<std::size_t>(l)];
    for (int i = 0; i < s.out; ++i) b[i] = dist(rng);
  }
}

DenseNet DenseNet::zeros(const std::vector<int>& widths, std::vector<OutputHead> heads) {
  return DenseNet(widths, std::move(heads));
}

void DenseNet::index_layers() {
  std::size_t w = 0;
  std::size_t b = 0;
  for (const auto& s : shapes_) {
    weight_offsets_.push_back(w);
    bias_offsets_.push_back(b);
    w += static_cast<std::size_t>(s.in) * static_cast<std::size_t>(s.out);
    b += static_cast<std::size_t>(s.out);
  }
  weights_.assign(w, 0.0);
  biases_.assign(b, 0.0);
}

std::span<double> DenseNet::mutable_weights() {
  ++version_;
  return weights_;
}

std::span<double> DenseNet::mutable_biases() {
  ++version_;
  return biases_;
}

Eigen::Map<const RowMajorMatrix> DenseNet::weight(int layer) const {
  const auto& s = shapes_[static_cast<std::size_t>(layer)];
  return Eigen::Map<const RowMajorMatrix>(weights_.data() + weight_offsets_[static_cast<std::size_t>(layer)], s.out, s.in);
}

Eigen::Map<const Vector> DenseNet::bias(int layer) const {
  const auto& s = shapes_[static_cast<std::size_t>(layer)];
  return Eigen::Map<const Vector>(biases_.data() + bias_offsets_[static_cast<std::size_t>(layer)], s.out);
}

double Gradients::max_abs() const {
  double m = 0.0;
  for (double g : weights) m = std::max(m, std::abs(g));
  for (double g : biases) m = std::max(m, std::abs(g));
  return m;
}

bool Gradients::finite() const {
  for (double g : weights)
    if (!std::isfinite(g)) return false;
  for (double g : biases)
    if (!std::isfinite(g)) return false;
  return true;
}

Matrix apply_heads(const std::vector<OutputHead>& heads, const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (const auto& h : heads) {
    auto z = logits.middleRows(h.begin, h.size);
    auto y = out.middleRows(h.begin, h.size);
    switch (h.kind) {
      case HeadKind::Identity:
        y = z;
        break;
      case HeadKind::Sigmoid:
        y = (1.0 + (-z.array()).exp()).inverse().matrix();
        break;
      case HeadKind::Softmax: {
        const Eigen::RowVectorXd max = z.colwise().maxCoeff();
        Matrix e = (z.rowwise() - max).array().exp().matrix();
        const Eigen::RowVectorXd sum = e.colwise().sum();
        y = (e.array().rowwise() / sum.array()).matrix();
        break;
      }
    }
  }
  return out;
}

Cache forward(const DenseNet& net, const Matrix& input) {
  if (input.rows() != net.input_size())
    throw ContractViolation("input has " + std::to_string(input.rows()) + " rows, network expects " +
                            std::to_string(net.input_size()));
  Cache cache;
  cache.net_identity = reinterpret_cast<std::uintptr_t>(&net);
  cache.net_version = net.version();
  cache.activations.reserve(static_cast<std::size_t>(net.layer_count()));
  cache.activations.push_back(input);
  const int last = net.layer_count() - 1;
  for (int l = 0; l < last; ++l) {
    Matrix z = net.weight(l) * cache.activations.back();
    z.colwise() += net.bias(l);
    cache.activations.push_back(z.array().tanh().matrix());
  }
  cache.logits = net.weight(last) * cache.activations.back();
  cache.logits.colwise() += net.bias(last);
  cache.output = apply_heads(net.heads(), cache.logits);
  return cache;
}

Vector forward(const DenseNet& net, std::span<const double> input) {
  Eigen::Map<const Vector> x(input.data(), static_cast<Eigen::Index>(input.size()));
  return forward(net, Matrix(x)).output.col(0);
}

Gradients backward(const DenseNet& net, const Cache& cache, const Matrix& output_gradient,
                   const Matrix* logit_gradient) {
  if (cache.net_identity != reinterpret_cast<std::uintptr_t>(&net) || cache.net_version != net.version())
    throw ContractViolation("stale forward cache: network changed since forward()");
  if (output_gradient.rows() != cache.output.rows() || output_gradient.cols() != cache.output.cols())
    throw ContractViolation("output gradient shape does not match forward output");

  // Pull the gradient back through the heads.
  Matrix delta(output_gradient.rows(), output_gradient.cols());
  for (const auto& h : net.heads()) {
    auto gy = output_gradient.middleRows(h.begin, h.size);
    auto y = cache.output.middleRows(h.begin, h.size);
    auto gz = delta.middleRows(h.begin, h.size);
    switch (h.kind) {
      case HeadKind::Identity:
        gz = gy;
        break;
      case HeadKind::Sigmoid:
        gz = (gy.array() * y.array() * (1.0 - y.array())).matrix();
        break;
      case HeadKind::Softmax: {
        const Eigen::RowVectorXd dot = (gy.array() * y.array()).colwise().sum();
        gz = (y.array() * (gy.array().rowwise() - dot.array())).matrix();
        break;
      }
    }
  }
  if (logit_gradient != nullptr) {
    if (logit_gradient->rows() != delta.rows() || logit_gradient->cols() != delta.cols())
      throw ContractViolation("logit gradient shape does not match forward output");
    delta += *logit_gradient;
  }

  Gradients g;
  g.weights.assign(net.weights().size(), 0.0);
  g.biases.assign(net.biases().size(), 0.0);
  std::size_t w_off = g.weights.size();
  std::size_t b_off = g.biases.size();
  for (int l = net.layer_count() - 1; l >= 0; --l) {
    const auto& s = net.layer_shapes()[static_cast<std::size_t>(l)];
    w_off -= static_cast<std::size_t>(s.in) * static_cast<std::size_t>(s.out);
    b_off -= static_cast<std::size_t>(s.out);
    const Matrix& a = cache.activations[static_cast<std::size_t>(l)];
    Eigen::Map<RowMajorMatrix>(g.weights.data() + w_off, s.out, s.in) = delta * a.transpose();
    Eigen::Map<Vector>(g.biases.data() + b_off, s.out) = delta.rowwise().sum();
    Matrix upstream = net.weight(l).transpose() * delta;
    if (l > 0) {
      delta = (upstream.array() * (1.0 - a.array().square())).matrix();
    } else {
      g.input = std::move(upstream);
    }
  }
  return g;
}

AdamState AdamState::for_net(const DenseNet& net, double learning_rate) {
  AdamState s;
  s.first_moment.assign(net.parameter_count(), 0.0);
  s.second_moment.assign(net.parameter_count(), 0.0);
  s.learning_rate = learning_rate;
  return s;
}

void adam_step(AdamState& state, DenseNet& net, const Gradients& grads) {
  if (grads.weights.size() != net.weights().size() || grads.biases.size() != net.biases().size())
    throw ContractViolation("gradient shape does not match network");
  if (state.first_moment.size() != net.parameter_count() || state.second_moment.size() != net.parameter_count())
    throw ContractViolation("optimizer state shape does not match network");
  if (!grads.finite()) throw NumericalError("non-finite gradient; Adam step skipped");

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  auto update = [&](std::span<double> params, const std::vector<double>& g, std::size_t offset) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      double& m = state.first_moment[offset + i];
      double& v = state.second_moment[offset + i];
      m = state.beta1 * m + (1.0 - state.beta1) * g[i];
      v = state.beta2 * v + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m / correction1;
      const double v_hat = v / correction2;
      params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  };
  update(net.mutable_weights(), grads.weights, 0);
  update(net.mutable_biases(), grads.biases, net.weights().size());
}

void soft_update(DenseNet& target, const DenseNet& source, double tau) {
  if (!target.same_shape(source)) throw ContractViolation("soft_update needs networks of identical shape");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ContractViolation("soft_update tau must lie in [0, 1]");
  auto blend = [tau](std::span<double> t, std::span<const double> s) {
    if (tau == 1.0) {
      std::copy(s.begin(), s.end(), t.begin());
      return;
    }
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = tau * s[i] + (1.0 - tau) * t[i];
  };
  blend(target.mutable_weights(), source.weights());
  blend(target.mutable_biases(), source.biases());
}

// ---------------------------------------------------------------------------

namespace {

void write_le(std::ofstream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_le(std::ifstream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw std::runtime_error("checkpoint payload truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t{bytes[i]} << (8 * i);
  return std::bit_cast<double>(bits);
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

}  // namespace

void save_checkpoint(const DenseNet& net, const std::filesystem::path& stem) {
  {
    std::ofstream desc(with_suffix(stem, ".desc"));
    if (!desc) throw std::runtime_error("cannot write " + with_suffix(stem, ".desc").string());
    desc << kCheckpointTag << '\n';
    desc << "activation tanh\n";
    desc << "widths";
    desc << ' ' << net.layer_shapes().front().in;
    for (const auto& s : net.layer_shapes()) desc << ' ' << s.out;
    desc << '\n';
    for (const auto& h : net.heads()) desc << "head " << head_name(h.kind) << ' ' << h.begin << ' ' << h.size << '\n';
    desc << "parameters " << net.parameter_count() << '\n';
  }
  std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + with_suffix(stem, ".bin").string());
  for (double w : net.weights()) write_le(bin, w);
  for (double b : net.biases()) write_le(bin, b);
}

DenseNet load_checkpoint(const std::filesystem::path& stem) {
  std::ifstream desc(with_suffix(stem, ".desc"));
  if (!desc) throw std::runtime_error("cannot read " + with_suffix(stem, ".desc").string());
  std::string line;
  std::getline(desc, line);
  if (line != kCheckpointTag) throw std::runtime_error("unsupported checkpoint version '" + line + "'");
  std::vector<int> widths;
  std::vector<OutputHead> heads;
  std::size_t declared = 0;
  while (std::getline(desc, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "widths") {
      int w;
      while (ls >> w) widths.push_back(w);
    } else if (key == "head") {
      std::string kind;
      OutputHead h;
      ls >> kind >> h.begin >> h.size;
      h.kind = head_from_name(kind);
      heads.push_back(h);
    } else if (key == "parameters") {
      ls >> declared;
    }
  }
  DenseNet net = DenseNet::zeros(widths, heads);
  if (declared != net.parameter_count()) throw std::runtime_error("checkpoint descriptor parameter count mismatch");
  std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + with_suffix(stem, ".bin").string());
  auto w = net.mutable_weights();
  for (auto& v : w) v = read_le(bin);
  auto b = net.mutable_biases();
  for (auto& v : b) v = read_le(bin);
  if (bin.peek() != std::char_traits<char>::eof()) throw std::runtime_error("checkpoint payload has trailing bytes");
  return net;
}

}  // namespace sagin::nn
