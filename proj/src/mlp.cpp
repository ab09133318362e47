#include "priorpose/mlp.hpp"

#include <cmath>

namespace priorpose {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw InvalidInput("unknown activation: " + name);
}

namespace {

Eigen::MatrixXd apply_act(Activation act, Eigen::MatrixXd z) {
  switch (act) {
    case Activation::kIdentity: return z;
    case Activation::kRelu: return z.cwiseMax(0.0);
    case Activation::kTanh: return z.array().tanh().matrix();
  }
  return z;
}

// Derivative expressed through the activation output.
Eigen::ArrayXXd act_deriv(Activation act, const Eigen::MatrixXd& a) {
  switch (act) {
    case Activation::kIdentity:
      return Eigen::ArrayXXd::Ones(a.rows(), a.cols());
    case Activation::kRelu:
      return (a.array() > 0.0).cast<double>();
    case Activation::kTanh:
      return 1.0 - a.array().square();
  }
  return Eigen::ArrayXXd::Ones(a.rows(), a.cols());
}

}  // namespace

Mlp Mlp::make(const std::vector<int>& dims, const std::vector<Activation>& acts,
              std::mt19937_64& rng) {
  if (dims.size() < 2 || acts.size() != dims.size() - 1)
    throw InvalidInput("Mlp::make: dims/acts mismatch");
  Mlp mlp;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    const int fan_in = dims[l], fan_out = dims[l + 1];
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> uni(-lim, lim);
    layer.w.resize(fan_out, fan_in);
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c)
        layer.w(r, c) = uni(rng);
    layer.b = Eigen::RowVectorXd::Zero(fan_out);
    layer.act = acts[l];
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd a = x;
  for (const Layer& layer : layers) {
    a = apply_act(layer.act,
                  (a * layer.w.transpose()).rowwise() + layer.b);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x,
                             std::vector<Eigen::MatrixXd>& tape) const {
  tape.clear();
  tape.reserve(layers.size() + 1);
  tape.push_back(x);
  for (const Layer& layer : layers) {
    tape.push_back(apply_act(
        layer.act, (tape.back() * layer.w.transpose()).rowwise() + layer.b));
  }
  return tape.back();
}

Eigen::MatrixXd Mlp::backward(const std::vector<Eigen::MatrixXd>& tape,
                              const Eigen::MatrixXd& d_out, Mlp* grads) const {
  if (tape.size() != layers.size() + 1)
    throw InvalidInput("Mlp::backward: tape does not match architecture");
  Eigen::MatrixXd da = d_out;
  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    const Eigen::MatrixXd dz =
        (da.array() * act_deriv(layers[l].act, tape[l + 1])).matrix();
    if (grads) {
      grads->layers[l].w.noalias() += dz.transpose() * tape[l];
      grads->layers[l].b += dz.colwise().sum();
    }
    da.noalias() = dz * layers[l].w;
  }
  return da;
}

void Mlp::set_zero() {
  for (Layer& layer : layers) {
    layer.w.setZero();
    layer.b.setZero();
  }
}

Eigen::Index Mlp::parameter_count() const {
  Eigen::Index n = 0;
  for (const Layer& layer : layers) n += layer.w.size() + layer.b.size();
  return n;
}

}  // namespace priorpose
