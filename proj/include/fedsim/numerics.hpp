#ifndef FEDSIM_NUMERICS_HPP_
#define FEDSIM_NUMERICS_HPP_

#include <cstddef>
#include <functional>
#include <map>
#include <vector>

#include "fedsim/tensor.hpp"

namespace fedsim {

// Scalar loss plus its gradient with respect to the loss input tensor.
struct LossResult {
  double value = 0.0;
  Tensor grad;
};

// out[b,j] = sum_i in[b,i] * w[i,j] + bias[j]
Tensor affine_forward(const Tensor& input, const Tensor& weight,
                      const Tensor& bias);

// Gradients of <out, grad_out> through the affine map.
struct AffineGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};
AffineGrads affine_backward(const Tensor& input, const Tensor& weight,
                            const Tensor& grad_out);

// Elementwise max(x, slope * x). Subgradient at exactly 0 is 1.
Tensor leaky_relu(const Tensor& input, double slope);
Tensor leaky_relu_backward(const Tensor& input, const Tensor& grad_out,
                           double slope);

// Row-wise softmax of logits / tau with max subtraction.
Tensor softmax_temp(const Tensor& logits, double tau);

// Mean over the batch of -log softmax(logits)[label].
// grad = (softmax - onehot) / B
LossResult cross_entropy(const Tensor& logits,
                         const std::vector<int>& labels);

// Batch-mean KL(p_T || p_S) with p = softmax(logits / tau). The teacher
// distribution is a constant; the gradient is with respect to the student
// logits only.
LossResult kd_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                   double tau);

// Batch-mean squared distance of each feature row to its class anchor.
// grad = 2 (f - anchor) / B; anchors receive no gradient.
LossResult center_loss(const Tensor& features, const std::vector<int>& labels,
                       const std::map<int, std::vector<double>>& anchors);

// p <- p - eta * g, elementwise. No momentum or decay.
void sgd_step(ParamVector& params, const ParamVector& grads, double eta);

// <a,b> / (|a| |b|) over the flattened vectors, accumulated in segment
// order. Throws DegenerateVectorError when either norm is below 1e-12.
double cosine_similarity(const ParamVector& a, const ParamVector& b);

// Central finite differences of a scalar function, per parameter scalar.
ParamVector finite_diff_grad(
    const std::function<double(const ParamVector&)>& loss_fn,
    const ParamVector& params, double eps);

}  // namespace fedsim

#endif  // FEDSIM_NUMERICS_HPP_
