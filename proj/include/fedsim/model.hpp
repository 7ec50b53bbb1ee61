#ifndef FEDSIM_MODEL_HPP_
#define FEDSIM_MODEL_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/tensor.hpp"

namespace fedsim {

// Network shape shared by every client and the server in one experiment.
// The extractor is the stack of affine+LeakyReLU layers
// input_dim -> hidden_dims... -> feature_dim; the classifier is the single
// affine layer feature_dim -> num_classes.
struct ModelArch {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims = {128, 128};
  std::size_t feature_dim = 128;
  std::size_t num_classes = 0;
  double leaky_slope = 0.01;

  void validate() const;
  // Layer widths of the extractor: [input_dim, hidden..., feature_dim].
  std::vector<std::size_t> extractor_widths() const;
  bool operator==(const ModelArch&) const = default;
};

// The decoupled model: extractor parameters and classifier parameters as
// separately addressable sets.
struct DecoupledModel {
  ParamVector extractor;
  ParamVector classifier;

  bool bitwise_equal(const DecoupledModel& other) const {
    return extractor.bitwise_equal(other.extractor) &&
           classifier.bitwise_equal(other.classifier);
  }
  // Extractor segments first (layer order), then classifier segments; the
  // order used whenever the model is treated as one vector.
  ParamVector combined() const;
  void set_combined(const ParamVector& full);
};

// Gradients shaped exactly like the model they were computed for.
struct ModelGradients {
  ParamVector extractor;
  ParamVector classifier;
};

// Glorot-uniform weights, zero biases, drawn from a stream keyed by seed.
DecoupledModel init_model(const ModelArch& arch, std::uint64_t seed);

// Feature map: stacked affine + LeakyReLU layers; the activation is applied
// to the final layer, so features live in the activated space.
Tensor extract(const ModelArch& arch, const ParamVector& theta,
               const Tensor& x);

// Classifier head: one affine layer producing raw logits.
Tensor classify(const ModelArch& arch, const ParamVector& phi,
                const Tensor& h);

Tensor forward(const ModelArch& arch, const DecoupledModel& model,
               const Tensor& x);

enum class TrainTarget { kExtractorOnly, kClassifierOnly, kBoth };

// Which loss terms are active for a backward pass. kd needs teacher logits;
// center needs anchors.
struct LossSpec {
  double lambda = 0.0;                 // weight of the distillation term
  const Tensor* teacher_logits = nullptr;
  double tau = 1.0;
  double mu = 0.0;                     // weight of the center term
  const std::map<int, std::vector<double>>* anchors = nullptr;
};

struct BackwardResult {
  ModelGradients grads;   // zero entries for the unselected component
  double ce = 0.0;        // unweighted cross-entropy value
  double kd = 0.0;        // lambda-weighted distillation value
  double center = 0.0;    // mu-weighted center value
  double total() const { return ce + kd + center; }
};

// Forward plus gradients of ce + lambda*kd + mu*center for the selected
// component only. The other component still shapes the forward pass.
BackwardResult backward_selective(const ModelArch& arch,
                                  const DecoupledModel& model, const Tensor& x,
                                  const std::vector<int>& labels,
                                  const LossSpec& loss, TrainTarget target);

ModelGradients zero_gradients(const DecoupledModel& model);

// Textual checkpoint: arch descriptor plus named segments with hexfloat
// values. Stable across runs.
void save_model(std::ostream& out, const ModelArch& arch,
                const DecoupledModel& model);
void save_model(const std::string& path, const ModelArch& arch,
                const DecoupledModel& model);
std::pair<ModelArch, DecoupledModel> load_model(std::istream& in);
std::pair<ModelArch, DecoupledModel> load_model(const std::string& path);

}  // namespace fedsim

#endif  // FEDSIM_MODEL_HPP_
