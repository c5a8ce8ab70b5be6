#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sere {

/// Layer widths of a dense ReLU network: input, one or more hidden layers, scalar output.
struct NetworkShape {
  std::vector<std::size_t> widths;

  NetworkShape() = default;
  NetworkShape(std::initializer_list<std::size_t> w) : widths(w) {}
  explicit NetworkShape(std::vector<std::size_t> w) : widths(std::move(w)) {}

  /// Builds [input, hidden..., 1].
  static NetworkShape make(std::size_t input, const std::vector<std::size_t>& hidden) {
    NetworkShape s;
    s.widths.push_back(input);
    s.widths.insert(s.widths.end(), hidden.begin(), hidden.end());
    s.widths.push_back(1);
    return s;
  }

  void validate() const {
    if (widths.size() < 3)
      throw std::invalid_argument("network shape needs input, >=1 hidden and output layer");
    for (auto w : widths)
      if (w == 0) throw std::invalid_argument("network shape has a zero-width layer");
    if (widths.back() != 1) throw std::invalid_argument("network output width must be 1");
  }

  std::size_t input_width() const { return widths.front(); }
  std::size_t num_hidden() const { return widths.size() - 2; }
  std::size_t num_weight_layers() const { return widths.size() - 1; }
  /// Width of the final hidden layer (the shallow-exploration feature size).
  std::size_t feature_width() const { return widths[widths.size() - 2]; }

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

/// Dense feedforward network. Weight layer k maps layer k to layer k+1 and is stored
/// as a (widths[k+1] x widths[k]) matrix, so hidden unit i of layer l owns row i of
/// weights(l-1) (incoming) and column i of weights(l) (outgoing).
template <typename Scalar>
class Network {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Network() = default;

  /// All-zero network of the given shape.
  explicit Network(NetworkShape shape) : shape_(std::move(shape)) {
    shape_.validate();
    const auto& w = shape_.widths;
    for (std::size_t k = 0; k + 1 < w.size(); ++k) {
      weights_.push_back(Matrix::Zero(w[k + 1], w[k]));
      biases_.push_back(Vector::Zero(w[k + 1]));
    }
  }

  const NetworkShape& shape() const { return shape_; }
  std::size_t num_weight_layers() const { return weights_.size(); }

  Matrix& weights(std::size_t k) { return weights_.at(k); }
  const Matrix& weights(std::size_t k) const { return weights_.at(k); }
  Vector& bias(std::size_t k) { return biases_.at(k); }
  const Vector& bias(std::size_t k) const { return biases_.at(k); }

  /// Hidden-to-output weights.
  const Matrix& output_weights() const { return weights_.back(); }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < weights_.size(); ++k) n += weights_[k].size() + biases_[k].size();
    return n;
  }

  bool all_finite() const {
    for (std::size_t k = 0; k < weights_.size(); ++k)
      if (!weights_[k].allFinite() || !biases_[k].allFinite()) return false;
    return true;
  }

  friend bool operator==(const Network& a, const Network& b) {
    if (!(a.shape_ == b.shape_)) return false;
    for (std::size_t k = 0; k < a.weights_.size(); ++k)
      if (a.weights_[k] != b.weights_[k] || a.biases_[k] != b.biases_[k]) return false;
    return true;
  }

 private:
  NetworkShape shape_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

/// Activations of every layer from one forward pass. activations[0] is the input,
/// activations[1..L] are the hidden ReLU outputs.
template <typename Scalar>
struct ForwardTrace {
  std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> activations;
  Scalar prediction{0};

  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& hidden(std::size_t l) const { return activations.at(l); }
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& last_hidden() const { return activations.back(); }
};

/// Gradient of the loss w.r.t. every parameter, laid out like Network.
template <typename Scalar>
struct Gradient {
  std::vector<typename Network<Scalar>::Matrix> weights;
  std::vector<typename Network<Scalar>::Vector> biases;

  bool all_finite() const {
    for (std::size_t k = 0; k < weights.size(); ++k)
      if (!weights[k].allFinite() || !biases[k].allFinite()) return false;
    return true;
  }
};

/// Kaiming-uniform bound sqrt(6 / fan_in).
template <typename Scalar>
Scalar kaiming_bound(std::size_t fan_in) {
  return std::sqrt(Scalar(6) / static_cast<Scalar>(fan_in));
}

/// Fills a block with i.i.d. draws from U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename Derived, typename Rng>
void fill_kaiming(Eigen::DenseBase<Derived>& block, std::size_t fan_in, Rng& rng) {
  using Scalar = typename Derived::Scalar;
  const Scalar b = kaiming_bound<Scalar>(fan_in);
  std::uniform_real_distribution<Scalar> dist(-b, b);
  for (Eigen::Index i = 0; i < block.rows(); ++i)
    for (Eigen::Index j = 0; j < block.cols(); ++j) block(i, j) = dist(rng);
}

template <typename Scalar>
Network<Scalar> init_kaiming(const NetworkShape& shape, std::uint64_t seed) {
  Network<Scalar> net(shape);
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < net.num_weight_layers(); ++k) {
    auto& w = net.weights(k);
    fill_kaiming(w, static_cast<std::size_t>(w.cols()), rng);
  }
  return net;
}

template <typename Scalar, typename Derived>
ForwardTrace<Scalar> forward(const Network<Scalar>& net, const Eigen::MatrixBase<Derived>& x) {
  if (static_cast<std::size_t>(x.size()) != net.shape().input_width())
    throw std::invalid_argument("forward: input has " + std::to_string(x.size()) + " entries, expected " +
                                std::to_string(net.shape().input_width()));
  ForwardTrace<Scalar> trace;
  const std::size_t layers = net.num_weight_layers();
  trace.activations.reserve(layers);
  trace.activations.emplace_back(x);
  for (std::size_t k = 0; k + 1 < layers; ++k) {
    typename Network<Scalar>::Vector z = net.weights(k) * trace.activations.back() + net.bias(k);
    trace.activations.emplace_back(z.cwiseMax(Scalar(0)));
  }
  trace.prediction = (net.weights(layers - 1) * trace.activations.back() + net.bias(layers - 1))(0);
  return trace;
}

/// Column-batched forward pass: column c of `inputs` is one sample. Returns the
/// final hidden activations (one column per sample) and writes predictions.
template <typename Scalar, typename Derived>
typename Network<Scalar>::Matrix forward_batch(const Network<Scalar>& net, const Eigen::MatrixBase<Derived>& inputs,
                                               Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& predictions) {
  using Matrix = typename Network<Scalar>::Matrix;
  if (static_cast<std::size_t>(inputs.rows()) != net.shape().input_width())
    throw std::invalid_argument("forward_batch: input dimension mismatch");
  const std::size_t layers = net.num_weight_layers();
  Matrix h = inputs;
  for (std::size_t k = 0; k + 1 < layers; ++k) {
    Matrix z = net.weights(k) * h;
    z.colwise() += net.bias(k);
    h = z.cwiseMax(Scalar(0));
  }
  predictions = ((net.weights(layers - 1) * h).array() + net.bias(layers - 1)(0)).transpose();
  return h;
}

/// Backpropagates 0.5 * (prediction - target)^2 through a recorded trace.
template <typename Scalar>
Gradient<Scalar> backprop(const Network<Scalar>& net, const ForwardTrace<Scalar>& trace, Scalar target) {
  using Vector = typename Network<Scalar>::Vector;
  const std::size_t layers = net.num_weight_layers();
  Gradient<Scalar> g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  Vector delta = Vector::Constant(1, trace.prediction - target);
  for (std::size_t k = layers; k-- > 0;) {
    g.weights[k] = delta * trace.activations[k].transpose();
    g.biases[k] = delta;
    if (k == 0) break;
    Vector back = net.weights(k).transpose() * delta;
    // ReLU derivative: h > 0 exactly when the pre-activation was positive.
    delta = (trace.activations[k].array() > Scalar(0)).select(back, Scalar(0));
  }
  return g;
}

/// One plain SGD step on the squared loss, in place. Returns the training forward trace
/// (pre-update activations). Throws and leaves the network untouched when the gradient
/// is not finite.
template <typename Scalar, typename Derived>
ForwardTrace<Scalar> sgd_step(Network<Scalar>& net, const Eigen::MatrixBase<Derived>& x, Scalar target,
                              Scalar lr) {
  if (!(lr > Scalar(0))) throw std::invalid_argument("sgd_step: learning rate must be positive");
  auto trace = forward(net, x);
  auto g = backprop(net, trace, target);
  if (!g.all_finite()) throw std::runtime_error("sgd_step: non-finite gradient");
  for (std::size_t k = 0; k < net.num_weight_layers(); ++k) {
    net.weights(k).noalias() -= lr * g.weights[k];
    net.bias(k).noalias() -= lr * g.biases[k];
  }
  return trace;
}

template <typename Scalar, typename Derived>
typename Network<Scalar>::Vector last_hidden_features(const Network<Scalar>& net,
                                                      const Eigen::MatrixBase<Derived>& x) {
  return forward(net, x).last_hidden();
}

/// l2 norm of the difference between the hidden-to-output weight layers.
template <typename Scalar>
Scalar last_layer_delta(const Network<Scalar>& a, const Network<Scalar>& b) {
  if (!(a.shape() == b.shape())) throw std::invalid_argument("last_layer_delta: shape mismatch");
  return (a.output_weights() - b.output_weights()).norm();
}

/// Element-wise mean of networks sharing one shape.
template <typename Scalar>
Network<Scalar> average_networks(std::span<const Network<Scalar>* const> nets) {
  if (nets.empty()) throw std::invalid_argument("average_networks: no networks");
  Network<Scalar> out = *nets.front();
  if (nets.size() == 1) return out;
  for (std::size_t n = 1; n < nets.size(); ++n) {
    if (!(nets[n]->shape() == out.shape())) throw std::invalid_argument("average_networks: shape mismatch");
    for (std::size_t k = 0; k < out.num_weight_layers(); ++k) {
      out.weights(k) += nets[n]->weights(k);
      out.bias(k) += nets[n]->bias(k);
    }
  }
  const Scalar inv = Scalar(1) / static_cast<Scalar>(nets.size());
  for (std::size_t k = 0; k < out.num_weight_layers(); ++k) {
    out.weights(k) *= inv;
    out.bias(k) *= inv;
  }
  return out;
}

// Checkpoint format (text):
//   sere-network v1
//   widths <n> w0 w1 ... w_{n-1}
//   then for each weight layer k: its weights row-major, then its biases,
//   whitespace separated, printed with max_digits10 so values round-trip exactly.
template <typename Scalar>
void save_network(std::ostream& out, const Network<Scalar>& net) {
  const auto old = out.precision(std::numeric_limits<Scalar>::max_digits10);
  out << "sere-network v1\nwidths " << net.shape().widths.size();
  for (auto w : net.shape().widths) out << ' ' << w;
  out << '\n';
  for (std::size_t k = 0; k < net.num_weight_layers(); ++k) {
    const auto& w = net.weights(k);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) out << (j ? " " : "") << w(i, j);
      out << '\n';
    }
    const auto& b = net.bias(k);
    for (Eigen::Index i = 0; i < b.size(); ++i) out << (i ? " " : "") << b(i);
    out << '\n';
  }
  out.precision(old);
}

template <typename Scalar>
Network<Scalar> load_network(std::istream& in) {
  std::string magic, version, tag;
  in >> magic >> version;
  if (magic != "sere-network" || version != "v1") throw std::runtime_error("load_network: bad header");
  std::size_t n = 0;
  in >> tag >> n;
  if (tag != "widths" || !in) throw std::runtime_error("load_network: missing widths");
  NetworkShape shape;
  shape.widths.resize(n);
  for (auto& w : shape.widths) in >> w;
  if (!in) throw std::runtime_error("load_network: truncated widths");
  Network<Scalar> net(shape);
  for (std::size_t k = 0; k < net.num_weight_layers(); ++k) {
    auto& w = net.weights(k);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) in >> w(i, j);
    auto& b = net.bias(k);
    for (Eigen::Index i = 0; i < b.size(); ++i) in >> b(i);
  }
  if (!in) throw std::runtime_error("load_network: truncated parameters");
  return net;
}

}  // namespace sere
