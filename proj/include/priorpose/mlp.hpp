#pragma once

#include <Eigen/Core>
#include <random>
#include <string>
#include <vector>

#include "priorpose/common.hpp"

namespace priorpose {

enum class Activation { kIdentity, kRelu, kTanh };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// A stack of dense layers applied row-wise to a batch of points.
// Forward keeps the per-layer activations as a tape so backward can produce
// analytic gradients for every weight, bias, and for the input.
struct Mlp {
  struct Layer {
    Eigen::MatrixXd w;       // out x in
    Eigen::RowVectorXd b;    // out
    Activation act = Activation::kIdentity;
  };
  std::vector<Layer> layers;

  // dims = {in, h1, ..., out}; acts has dims.size()-1 entries.
  // Weights are uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static Mlp make(const std::vector<int>& dims,
                  const std::vector<Activation>& acts, std::mt19937_64& rng);

  int input_dim() const { return static_cast<int>(layers.front().w.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().w.rows()); }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

  // Tape layout: tape[0] = input, tape[l+1] = activation of layer l.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x,
                          std::vector<Eigen::MatrixXd>& tape) const;

  // Backpropagates dL/d(output); accumulates parameter gradients into
  // `grads` (an architecture clone, may be null) and returns dL/d(input).
  Eigen::MatrixXd backward(const std::vector<Eigen::MatrixXd>& tape,
                           const Eigen::MatrixXd& d_out, Mlp* grads) const;

  void set_zero();
  Eigen::Index parameter_count() const;
};

}  // namespace priorpose
