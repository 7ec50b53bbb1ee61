#include "fedsim/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsim/errors.hpp"

namespace fedsim {

namespace {

void require_2d(const Tensor& t, const char* where) {
  if (t.shape.size() != 2) {
    throw DimensionError(std::string(where) + ": expected 2-D tensor, got " +
                         shape_str(t.shape));
  }
}

// C[n x m] += A[n x k] * B[k x m]
void matmul_acc(const double* a, const double* b, double* c, std::size_t n,
                std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * m;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = b + l * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor affine_forward(const Tensor& input, const Tensor& weight,
                      const Tensor& bias) {
  require_2d(input, "affine_forward input");
  require_2d(weight, "affine_forward weight");
  const std::size_t batch = input.shape[0];
  const std::size_t in_dim = input.shape[1];
  const std::size_t out_dim = weight.shape[1];
  if (weight.shape[0] != in_dim || bias.numel() != out_dim) {
    throw DimensionError("affine_forward: input " + shape_str(input.shape) +
                         " incompatible with weight " +
                         shape_str(weight.shape) + " and bias " +
                         shape_str(bias.shape));
  }
  Tensor out = Tensor::zeros({batch, out_dim});
  for (std::size_t i = 0; i < batch; ++i) {
    double* row = out.data.data() + i * out_dim;
    for (std::size_t j = 0; j < out_dim; ++j) row[j] = bias.data[j];
  }
  matmul_acc(input.data.data(), weight.data.data(), out.data.data(), batch,
             in_dim, out_dim);
  return out;
}

AffineGrads affine_backward(const Tensor& input, const Tensor& weight,
                            const Tensor& grad_out) {
  const std::size_t batch = input.shape[0];
  const std::size_t in_dim = input.shape[1];
  const std::size_t out_dim = weight.shape[1];
  if (grad_out.shape != std::vector<std::size_t>{batch, out_dim}) {
    throw DimensionError("affine_backward: grad_out " +
                         shape_str(grad_out.shape) + " vs expected [" +
                         std::to_string(batch) + "," +
                         std::to_string(out_dim) + "]");
  }
  AffineGrads g;
  g.input = Tensor::zeros({batch, in_dim});
  g.weight = Tensor::zeros({in_dim, out_dim});
  g.bias = Tensor::zeros({out_dim});

  // dW[i,j] += x[b,i] * dy[b,j]
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xrow = input.data.data() + b * in_dim;
    const double* dyrow = grad_out.data.data() + b * out_dim;
    for (std::size_t i = 0; i < in_dim; ++i) {
      const double xv = xrow[i];
      if (xv == 0.0) continue;
      double* wrow = g.weight.data.data() + i * out_dim;
      for (std::size_t j = 0; j < out_dim; ++j) wrow[j] += xv * dyrow[j];
    }
    for (std::size_t j = 0; j < out_dim; ++j) g.bias.data[j] += dyrow[j];
  }
  // dX[b,i] = sum_j dy[b,j] * w[i,j]
  for (std::size_t b = 0; b < batch; ++b) {
    const double* dyrow = grad_out.data.data() + b * out_dim;
    double* dxrow = g.input.data.data() + b * in_dim;
    for (std::size_t i = 0; i < in_dim; ++i) {
      const double* wrow = weight.data.data() + i * out_dim;
      double acc = 0.0;
      for (std::size_t j = 0; j < out_dim; ++j) acc += dyrow[j] * wrow[j];
      dxrow[i] = acc;
    }
  }
  return g;
}

Tensor leaky_relu(const Tensor& input, double slope) {
  Tensor out = input;
  for (double& v : out.data) {
    if (v < 0.0) v *= slope;
  }
  return out;
}

Tensor leaky_relu_backward(const Tensor& input, const Tensor& grad_out,
                           double slope) {
  require_same_shape(input, grad_out, "leaky_relu_backward");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    if (input.data[i] < 0.0) g.data[i] *= slope;
  }
  return g;
}

Tensor softmax_temp(const Tensor& logits, double tau) {
  if (tau <= 0.0) {
    throw ParameterError("softmax_temp: tau must be positive, got " +
                         std::to_string(tau));
  }
  require_2d(logits, "softmax_temp");
  const std::size_t batch = logits.shape[0];
  const std::size_t classes = logits.shape[1];
  Tensor out = Tensor::zeros({batch, classes});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = logits.data.data() + b * classes;
    double* orow = out.data.data() + b * classes;
    double mx = row[0];
    for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      orow[j] = std::exp((row[j] - mx) / tau);
      sum += orow[j];
    }
    for (std::size_t j = 0; j < classes; ++j) orow[j] /= sum;
  }
  return out;
}

LossResult cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require_2d(logits, "cross_entropy");
  const std::size_t batch = logits.shape[0];
  const std::size_t classes = logits.shape[1];
  if (labels.size() != batch) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch " + std::to_string(batch));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw InputError("cross_entropy: label " + std::to_string(y) +
                       " out of range [0," + std::to_string(classes) + ")");
    }
  }
  LossResult res;
  res.grad = Tensor::zeros({batch, classes});
  if (batch == 0) return res;
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = logits.data.data() + b * classes;
    double* grow = res.grad.data.data() + b * classes;
    double mx = row[0];
    for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      grow[j] = std::exp(row[j] - mx);
      sum += grow[j];
    }
    const double logsum = std::log(sum) + mx;
    total += logsum - row[labels[b]];
    for (std::size_t j = 0; j < classes; ++j) {
      grow[j] = grow[j] / sum / static_cast<double>(batch);
    }
    grow[labels[b]] -= 1.0 / static_cast<double>(batch);
  }
  res.value = total / static_cast<double>(batch);
  return res;
}

LossResult kd_loss(const Tensor& teacher_logits, const Tensor& student_logits,
                   double tau) {
  require_same_shape(teacher_logits, student_logits, "kd_loss");
  if (tau <= 0.0) {
    throw ParameterError("kd_loss: tau must be positive, got " +
                         std::to_string(tau));
  }
  const std::size_t batch = student_logits.shape[0];
  const std::size_t classes = student_logits.shape[1];
  LossResult res;
  res.grad = Tensor::zeros({batch, classes});
  if (batch == 0) return res;
  const Tensor p_t = softmax_temp(teacher_logits, tau);
  const Tensor p_s = softmax_temp(student_logits, tau);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* tr = p_t.data.data() + b * classes;
    const double* sr = p_s.data.data() + b * classes;
    double* grow = res.grad.data.data() + b * classes;
    for (std::size_t j = 0; j < classes; ++j) {
      if (tr[j] > 0.0) total += tr[j] * (std::log(tr[j]) - std::log(sr[j]));
      grow[j] = (sr[j] - tr[j]) / (tau * static_cast<double>(batch));
    }
  }
  res.value = total / static_cast<double>(batch);
  return res;
}

LossResult center_loss(const Tensor& features, const std::vector<int>& labels,
                       const std::map<int, std::vector<double>>& anchors) {
  require_2d(features, "center_loss");
  const std::size_t batch = features.shape[0];
  const std::size_t dim = features.shape[1];
  if (labels.size() != batch) {
    throw DimensionError("center_loss: " + std::to_string(labels.size()) +
                         " labels for batch " + std::to_string(batch));
  }
  LossResult res;
  res.grad = Tensor::zeros({batch, dim});
  if (batch == 0) return res;
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    auto it = anchors.find(labels[b]);
    if (it == anchors.end()) {
      throw InvariantError("center_loss: no anchor for class " +
                           std::to_string(labels[b]));
    }
    if (it->second.size() != dim) {
      throw DimensionError("center_loss: anchor dim " +
                           std::to_string(it->second.size()) +
                           " vs feature dim " + std::to_string(dim));
    }
    const double* frow = features.data.data() + b * dim;
    double* grow = res.grad.data.data() + b * dim;
    const double* anchor = it->second.data();
    for (std::size_t j = 0; j < dim; ++j) {
      const double diff = frow[j] - anchor[j];
      total += diff * diff;
      grow[j] = 2.0 * diff / static_cast<double>(batch);
    }
  }
  res.value = total / static_cast<double>(batch);
  return res;
}

void sgd_step(ParamVector& params, const ParamVector& grads, double eta) {
  require_same_layout(params, grads, "sgd_step");
  for (std::size_t i = 0; i < params.segments.size(); ++i) {
    double* p = params.segments[i].value.data.data();
    const double* g = grads.segments[i].value.data.data();
    const std::size_t n = params.segments[i].value.numel();
    for (std::size_t j = 0; j < n; ++j) p[j] -= eta * g[j];
  }
}

double cosine_similarity(const ParamVector& a, const ParamVector& b) {
  require_same_layout(a, b, "cosine_similarity");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.segments.size(); ++i) {
    const double* av = a.segments[i].value.data.data();
    const double* bv = b.segments[i].value.data.data();
    const std::size_t n = a.segments[i].value.numel();
    for (std::size_t j = 0; j < n; ++j) {
      dot += av[j] * bv[j];
      na += av[j] * av[j];
      nb += bv[j] * bv[j];
    }
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) {
    throw DegenerateVectorError(
        "cosine_similarity: vector norm below 1e-12 (" + std::to_string(na) +
        ", " + std::to_string(nb) + ")");
  }
  return dot / (na * nb);
}

ParamVector finite_diff_grad(
    const std::function<double(const ParamVector&)>& loss_fn,
    const ParamVector& params, double eps) {
  ParamVector grads = params;
  grads.fill(0.0);
  ParamVector probe = params;
  for (std::size_t s = 0; s < params.segments.size(); ++s) {
    const std::size_t n = params.segments[s].value.numel();
    for (std::size_t j = 0; j < n; ++j) {
      const double orig = params.segments[s].value.data[j];
      probe.segments[s].value.data[j] = orig + eps;
      const double up = loss_fn(probe);
      probe.segments[s].value.data[j] = orig - eps;
      const double down = loss_fn(probe);
      probe.segments[s].value.data[j] = orig;
      grads.segments[s].value.data[j] = (up - down) / (2.0 * eps);
    }
  }
  return grads;
}

}  // namespace fedsim
