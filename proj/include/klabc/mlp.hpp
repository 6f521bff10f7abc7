#ifndef KLABC_MLP_HPP
#define KLABC_MLP_HPP

#include <klabc/core.hpp>
#include <klabc/logistic.hpp>

#include <numeric>
#include <string>
#include <vector>

namespace klabc {

enum class Activation { kRelu, kTanh };

inline Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "' (expected relu or tanh)");
}

inline std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

namespace detail {

/// tanh(x) = 1 - 2 / (exp(2x) + 1), using Eigen's packet exp.
inline void tanh_inplace(Eigen::MatrixXd& a) { a = 1.0 - 2.0 / ((2.0 * a.array()).exp() + 1.0); }

}  // namespace detail

struct MlpLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::kRelu;
};

/// Hidden layers followed by a single linear logit.
struct MlpModel {
  std::vector<MlpLayer> hidden;
  Eigen::RowVectorXd output_weight;
  double output_bias = 0.0;

  std::size_t parameter_count() const {
    std::size_t count = static_cast<std::size_t>(output_weight.size()) + 1;
    for (const auto& layer : hidden) count += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    return count;
  }

  /// Layer by layer: weight (column-major), bias; then output weight and bias.
  Eigen::VectorXd flatten() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (const auto& layer : hidden) {
      out.segment(k, layer.weight.size()) = layer.weight.reshaped();
      k += layer.weight.size();
      out.segment(k, layer.bias.size()) = layer.bias;
      k += layer.bias.size();
    }
    out.segment(k, output_weight.size()) = output_weight.transpose();
    k += output_weight.size();
    out[k] = output_bias;
    return out;
  }

  void assign(const Eigen::VectorXd& params) {
    Eigen::Index k = 0;
    for (auto& layer : hidden) {
      layer.weight.reshaped() = params.segment(k, layer.weight.size());
      k += layer.weight.size();
      layer.bias = params.segment(k, layer.bias.size());
      k += layer.bias.size();
    }
    output_weight = params.segment(k, output_weight.size()).transpose();
    k += output_weight.size();
    output_bias = params[k];
  }

  /// Raw logits for every row of x (rows x features).
  Eigen::VectorXd logits(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd a = x;
    for (const auto& layer : hidden) {
      Eigen::MatrixXd z = a * layer.weight.transpose();
      z.rowwise() += layer.bias.transpose();
      if (layer.activation == Activation::kRelu) {
        a = z.cwiseMax(0.0);
      } else {
        detail::tanh_inplace(z);
        a = std::move(z);
      }
    }
    return (a * output_weight.transpose()).array() + output_bias;
  }
};

/// Glorot-uniform weights (+-sqrt(6 / (fan_in + fan_out))), zero biases.
inline MlpModel init_mlp(Eigen::Index inputs, const std::vector<std::size_t>& sizes,
                         const std::vector<Activation>& activations, RandomStream& rng) {
  if (sizes.size() != activations.size()) {
    throw ConfigError("mlp: layer_sizes and activations must have equal length");
  }
  MlpModel model;
  auto uniform_fill = [&rng](Eigen::MatrixXd& w) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
  };
  Eigen::Index fan_in = inputs;
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    const auto width = static_cast<Eigen::Index>(sizes[l]);
    if (width < 1) throw ConfigError("mlp: layer sizes must be >= 1");
    MlpLayer layer{Eigen::MatrixXd(width, fan_in), Eigen::VectorXd::Zero(width), activations[l]};
    uniform_fill(layer.weight);
    model.hidden.push_back(std::move(layer));
    fan_in = width;
  }
  Eigen::MatrixXd out(1, fan_in);
  uniform_fill(out);
  model.output_weight = out.row(0);
  return model;
}

/// Per-layer gradient blocks matching MlpModel.
struct MlpGradient {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
  Eigen::RowVectorXd output_weight;
  double output_bias = 0.0;

  /// flatten() order.
  Eigen::VectorXd flatten() const {
    Eigen::Index total = output_weight.size() + 1;
    for (std::size_t l = 0; l < weight.size(); ++l) total += weight[l].size() + bias[l].size();
    Eigen::VectorXd out(total);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weight.size(); ++l) {
      out.segment(k, weight[l].size()) = weight[l].reshaped();
      k += weight[l].size();
      out.segment(k, bias[l].size()) = bias[l];
      k += bias[l].size();
    }
    out.segment(k, output_weight.size()) = output_weight.transpose();
    out[k + output_weight.size()] = output_bias;
    return out;
  }
};

namespace detail {

struct MlpWorkspace {
  std::vector<Eigen::MatrixXd> acts;  // post-activation outputs per hidden layer
  Eigen::VectorXd eta;
  Eigen::VectorXd d_eta;
  Eigen::MatrixXd upstream;
  Eigen::MatrixXd dz;
};

/// Weighted objective over the rows of x; fills `grad` when given.
inline double mlp_forward_backward(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& labels,
                                   const Eigen::VectorXd& weights, MlpGradient* grad, MlpWorkspace& ws,
                                   bool with_value = true) {
  const std::size_t depth = model.hidden.size();
  ws.acts.resize(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& layer = model.hidden[l];
    const Eigen::MatrixXd& input = l == 0 ? x : ws.acts[l - 1];
    Eigen::MatrixXd& a = ws.acts[l];
    a.noalias() = input.lazyProduct(layer.weight.transpose());
    a.rowwise() += layer.bias.transpose();
    if (layer.activation == Activation::kRelu) {
      a = a.cwiseMax(0.0);
    } else {
      tanh_inplace(a);
    }
  }
  const Eigen::MatrixXd& last = depth == 0 ? x : ws.acts[depth - 1];
  ws.eta.noalias() = last.lazyProduct(model.output_weight.transpose());
  ws.eta.array() += model.output_bias;

  double value = 0.0;
  ws.d_eta.resize(ws.eta.size());
  for (Eigen::Index i = 0; i < ws.eta.size(); ++i) {
    if (with_value) value += weights[i] * log_likelihood_term(labels[i], ws.eta[i]);
    ws.d_eta[i] = weights[i] * (labels[i] - sigmoid(ws.eta[i]));
  }
  if (grad == nullptr) return value;

  grad->weight.resize(depth);
  grad->bias.resize(depth);
  grad->output_bias = ws.d_eta.sum();
  grad->output_weight.noalias() = ws.d_eta.transpose().lazyProduct(last);
  ws.upstream.noalias() = ws.d_eta.lazyProduct(model.output_weight);
  for (std::size_t l = depth; l-- > 0;) {
    const auto& layer = model.hidden[l];
    const Eigen::MatrixXd& a = ws.acts[l];
    if (layer.activation == Activation::kRelu) {
      ws.dz = (a.array() > 0.0).select(ws.upstream, 0.0);
    } else {
      ws.dz = (1.0 - a.array().square()) * ws.upstream.array();
    }
    grad->bias[l] = ws.dz.colwise().sum().transpose();
    const Eigen::MatrixXd& input = l == 0 ? x : ws.acts[l - 1];
    grad->weight[l].noalias() = ws.dz.transpose().lazyProduct(input);
    if (l > 0) ws.upstream.noalias() = ws.dz.lazyProduct(layer.weight);
  }
  return value;
}

}  // namespace detail

/// Weighted objective sum_i w_i [y_i log D(x_i) + (1 - y_i) log(1 - D(x_i))]
/// over the given rows; fills the gradient with respect to flatten() order.
inline double mlp_objective(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& labels,
                            const Eigen::VectorXd& weights, Eigen::VectorXd* gradient = nullptr) {
  detail::MlpWorkspace ws;
  if (gradient == nullptr) return detail::mlp_forward_backward(model, x, labels, weights, nullptr, ws);
  MlpGradient g;
  const double value = detail::mlp_forward_backward(model, x, labels, weights, &g, ws);
  *gradient = g.flatten();
  return value;
}

struct MlpTrainOptions {
  std::size_t epochs = 200;
  double learning_rate = 1e-2;
  std::size_t batch_size = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

/// Mini-batch Adam ascent on the weighted objective. Each batch gradient is
/// rescaled by rows / batch so it estimates the full-data gradient.
inline MlpModel train_mlp(const LogisticProblem& problem, const std::vector<std::size_t>& sizes,
                          const std::vector<Activation>& activations, const MlpTrainOptions& options,
                          SeedSpec seed) {
  RandomStream rng(seed);
  MlpModel model = init_mlp(problem.features(), sizes, activations, rng);
  const std::size_t depth = model.hidden.size();

  // Adam moments, one block per parameter block.
  MlpGradient m1, m2, grad;
  for (const auto& layer : model.hidden) {
    m1.weight.push_back(Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
    m1.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
  m1.output_weight = Eigen::RowVectorXd::Zero(model.output_weight.size());
  m2 = m1;

  const auto rows = static_cast<std::size_t>(problem.rows());
  const std::size_t batch = std::max<std::size_t>(1, std::min(options.batch_size, rows));
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Eigen::MatrixXd bx;
  Eigen::VectorXd by, bw;
  detail::MlpWorkspace ws;
  double c1 = 1.0, c2 = 1.0;
  const double b1 = options.beta1, b2 = options.beta2, lr = options.learning_rate, eps = options.adam_eps;

  auto adam = [&](auto& param, auto& first, auto& second, const auto& g) {
    first = b1 * first + (1.0 - b1) * g;
    second = b2 * second + (1.0 - b2) * g.cwiseAbs2();
    param.array() += lr * (first.array() / (1.0 - c1)) / ((second.array() / (1.0 - c2)).sqrt() + eps);
  };

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = rows; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < rows; start += batch) {
      const std::size_t count = std::min(batch, rows - start);
      bx.resize(static_cast<Eigen::Index>(count), problem.features());
      by.resize(static_cast<Eigen::Index>(count));
      bw.resize(static_cast<Eigen::Index>(count));
      const double rescale = static_cast<double>(rows) / static_cast<double>(count);
      for (std::size_t r = 0; r < count; ++r) {
        const auto src = static_cast<Eigen::Index>(order[start + r]);
        const auto dst = static_cast<Eigen::Index>(r);
        bx.row(dst) = problem.design.row(src);
        by[dst] = problem.labels[src];
        bw[dst] = problem.weights[src] * rescale;
      }
      detail::mlp_forward_backward(model, bx, by, bw, &grad, ws, false);
      c1 *= b1;
      c2 *= b2;
      for (std::size_t l = 0; l < depth; ++l) {
        adam(model.hidden[l].weight, m1.weight[l], m2.weight[l], grad.weight[l]);
        adam(model.hidden[l].bias, m1.bias[l], m2.bias[l], grad.bias[l]);
      }
      adam(model.output_weight, m1.output_weight, m2.output_weight, grad.output_weight);
      m1.output_bias = b1 * m1.output_bias + (1.0 - b1) * grad.output_bias;
      m2.output_bias = b2 * m2.output_bias + (1.0 - b2) * grad.output_bias * grad.output_bias;
      model.output_bias += lr * (m1.output_bias / (1.0 - c1)) / (std::sqrt(m2.output_bias / (1.0 - c2)) + eps);
    }
  }
  return model;
}

}  // namespace klabc

#endif  // KLABC_MLP_HPP
