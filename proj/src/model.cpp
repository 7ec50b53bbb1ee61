#include "fedsim/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedsim/errors.hpp"
#include "fedsim/numerics.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

void ModelArch::validate() const {
  if (input_dim < 1 || feature_dim < 1 || num_classes < 1) {
    throw ConfigError("ModelArch: all dims must be >= 1");
  }
  for (std::size_t h : hidden_dims) {
    if (h < 1) throw ConfigError("ModelArch: hidden dims must be >= 1");
  }
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
    throw ConfigError("ModelArch: leaky_slope must be in (0,1)");
  }
}

std::vector<std::size_t> ModelArch::extractor_widths() const {
  std::vector<std::size_t> w;
  w.push_back(input_dim);
  for (std::size_t h : hidden_dims) w.push_back(h);
  w.push_back(feature_dim);
  return w;
}

ParamVector DecoupledModel::combined() const {
  ParamVector full;
  full.segments.reserve(extractor.segments.size() +
                        classifier.segments.size());
  for (const auto& s : extractor.segments) full.segments.push_back(s);
  for (const auto& s : classifier.segments) full.segments.push_back(s);
  return full;
}

void DecoupledModel::set_combined(const ParamVector& full) {
  const std::size_t ne = extractor.segments.size();
  if (full.segments.size() != ne + classifier.segments.size()) {
    throw DimensionError("set_combined: segment count mismatch");
  }
  for (std::size_t i = 0; i < ne; ++i) {
    extractor.segments[i].value = full.segments[i].value;
  }
  for (std::size_t i = 0; i < classifier.segments.size(); ++i) {
    classifier.segments[i].value = full.segments[ne + i].value;
  }
}

namespace {

ParamSegment glorot_layer(const std::string& name, std::size_t fan_in,
                          std::size_t fan_out, bool is_weight, Rng& rng) {
  if (!is_weight) {
    return {name, Tensor::zeros({fan_out})};
  }
  const double bound =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w = Tensor::zeros({fan_in, fan_out});
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  return {name, std::move(w)};
}

}  // namespace

DecoupledModel init_model(const ModelArch& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  DecoupledModel m;
  const auto widths = arch.extractor_widths();
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::string base = "extractor." + std::to_string(l);
    m.extractor.segments.push_back(
        glorot_layer(base + ".weight", widths[l], widths[l + 1], true, rng));
    m.extractor.segments.push_back(
        glorot_layer(base + ".bias", widths[l], widths[l + 1], false, rng));
  }
  m.classifier.segments.push_back(glorot_layer(
      "classifier.weight", arch.feature_dim, arch.num_classes, true, rng));
  m.classifier.segments.push_back(glorot_layer(
      "classifier.bias", arch.feature_dim, arch.num_classes, false, rng));
  return m;
}

Tensor extract(const ModelArch& arch, const ParamVector& theta,
               const Tensor& x) {
  if (x.shape.size() != 2 || x.shape[1] != arch.input_dim) {
    throw DimensionError("extract: input " + shape_str(x.shape) +
                         " vs expected [*," + std::to_string(arch.input_dim) +
                         "]");
  }
  const std::size_t layers = arch.extractor_widths().size() - 1;
  if (theta.segments.size() != 2 * layers) {
    throw DimensionError("extract: parameter segment count " +
                         std::to_string(theta.segments.size()) +
                         " vs expected " + std::to_string(2 * layers));
  }
  Tensor h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor z = affine_forward(h, theta.segments[2 * l].value,
                              theta.segments[2 * l + 1].value);
    h = leaky_relu(z, arch.leaky_slope);
  }
  return h;
}

Tensor classify(const ModelArch& arch, const ParamVector& phi,
                const Tensor& h) {
  if (h.shape.size() != 2 || h.shape[1] != arch.feature_dim) {
    throw DimensionError("classify: features " + shape_str(h.shape) +
                         " vs expected [*," +
                         std::to_string(arch.feature_dim) + "]");
  }
  return affine_forward(h, phi.segments[0].value, phi.segments[1].value);
}

Tensor forward(const ModelArch& arch, const DecoupledModel& model,
               const Tensor& x) {
  return classify(arch, model.classifier, extract(arch, model.extractor, x));
}

ModelGradients zero_gradients(const DecoupledModel& model) {
  ModelGradients g;
  g.extractor = model.extractor;
  g.classifier = model.classifier;
  g.extractor.fill(0.0);
  g.classifier.fill(0.0);
  return g;
}

BackwardResult backward_selective(const ModelArch& arch,
                                  const DecoupledModel& model, const Tensor& x,
                                  const std::vector<int>& labels,
                                  const LossSpec& loss, TrainTarget target) {
  if (loss.lambda != 0.0 && loss.teacher_logits == nullptr) {
    throw ConfigError(
        "backward_selective: distillation requested without teacher logits");
  }
  if (loss.mu != 0.0 && loss.anchors == nullptr) {
    throw ConfigError(
        "backward_selective: center term requested without anchors");
  }

  const std::size_t layers = arch.extractor_widths().size() - 1;
  // Cached forward pass: pre-activations per layer plus layer inputs.
  std::vector<Tensor> inputs;   // inputs[l] feeds layer l
  std::vector<Tensor> preacts;  // preacts[l] = affine output of layer l
  inputs.reserve(layers + 1);
  preacts.reserve(layers);
  inputs.push_back(x);
  for (std::size_t l = 0; l < layers; ++l) {
    preacts.push_back(affine_forward(inputs.back(),
                                     model.extractor.segments[2 * l].value,
                                     model.extractor.segments[2 * l + 1].value));
    inputs.push_back(leaky_relu(preacts.back(), arch.leaky_slope));
  }
  const Tensor& features = inputs.back();
  const Tensor logits = classify(arch, model.classifier, features);

  BackwardResult out;
  out.grads = zero_gradients(model);

  LossResult ce = cross_entropy(logits, labels);
  out.ce = ce.value;
  Tensor dlogits = ce.grad;
  if (loss.lambda != 0.0) {
    LossResult kd = kd_loss(*loss.teacher_logits, logits, loss.tau);
    out.kd = loss.lambda * kd.value;
    for (std::size_t i = 0; i < dlogits.data.size(); ++i) {
      dlogits.data[i] += loss.lambda * kd.grad.data[i];
    }
  }

  const bool want_classifier = target != TrainTarget::kExtractorOnly;
  const bool want_extractor = target != TrainTarget::kClassifierOnly;

  AffineGrads head = affine_backward(
      features, model.classifier.segments[0].value, dlogits);
  if (want_classifier) {
    out.grads.classifier.segments[0].value = head.weight;
    out.grads.classifier.segments[1].value = head.bias;
  }
  if (!want_extractor) {
    if (loss.mu != 0.0) {
      // Still report the value so loss traces stay comparable.
      LossResult cl = center_loss(features, labels, *loss.anchors);
      out.center = loss.mu * cl.value;
    }
    return out;
  }

  Tensor dfeatures = head.input;
  if (loss.mu != 0.0) {
    LossResult cl = center_loss(features, labels, *loss.anchors);
    out.center = loss.mu * cl.value;
    for (std::size_t i = 0; i < dfeatures.data.size(); ++i) {
      dfeatures.data[i] += loss.mu * cl.grad.data[i];
    }
  }

  Tensor dh = dfeatures;
  for (std::size_t l = layers; l-- > 0;) {
    Tensor dz = leaky_relu_backward(preacts[l], dh, arch.leaky_slope);
    AffineGrads g = affine_backward(
        inputs[l], model.extractor.segments[2 * l].value, dz);
    out.grads.extractor.segments[2 * l].value = g.weight;
    out.grads.extractor.segments[2 * l + 1].value = g.bias;
    dh = g.input;
  }
  return out;
}

namespace {

std::string hexfmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

void write_param_vector(std::ostream& out, const ParamVector& pv) {
  for (const auto& seg : pv.segments) {
    out << "segment " << seg.name << " " << seg.value.shape.size();
    for (std::size_t e : seg.value.shape) out << " " << e;
    out << "\n";
    for (std::size_t i = 0; i < seg.value.data.size(); ++i) {
      out << hexfmt(seg.value.data[i])
          << ((i + 1) % 8 == 0 || i + 1 == seg.value.data.size() ? "\n" : " ");
    }
  }
}

}  // namespace

void save_model(std::ostream& out, const ModelArch& arch,
                const DecoupledModel& model) {
  out << "fedsim-checkpoint v1\n";
  out << "arch " << arch.input_dim << " " << arch.feature_dim << " "
      << arch.num_classes << " " << hexfmt(arch.leaky_slope) << " "
      << arch.hidden_dims.size();
  for (std::size_t h : arch.hidden_dims) out << " " << h;
  out << "\n";
  out << "extractor " << model.extractor.segments.size() << "\n";
  write_param_vector(out, model.extractor);
  out << "classifier " << model.classifier.segments.size() << "\n";
  write_param_vector(out, model.classifier);
}

void save_model(const std::string& path, const ModelArch& arch,
                const DecoupledModel& model) {
  std::ofstream f(path);
  if (!f) throw InputError("save_model: cannot open " + path);
  save_model(f, arch, model);
}

namespace {

ParamVector read_param_vector(std::istream& in, std::size_t count) {
  ParamVector pv;
  for (std::size_t s = 0; s < count; ++s) {
    std::string tag;
    in >> tag;
    if (tag != "segment") throw InputError("load_model: expected 'segment'");
    ParamSegment seg;
    std::size_t ndims = 0;
    in >> seg.name >> ndims;
    std::size_t total = 1;
    seg.value.shape.resize(ndims);
    for (std::size_t i = 0; i < ndims; ++i) {
      in >> seg.value.shape[i];
      total *= seg.value.shape[i];
    }
    seg.value.data.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
      std::string tok;
      in >> tok;
      seg.value.data[i] = std::strtod(tok.c_str(), nullptr);
    }
    if (!in) throw InputError("load_model: truncated segment " + seg.name);
    pv.segments.push_back(std::move(seg));
  }
  return pv;
}

}  // namespace

std::pair<ModelArch, DecoupledModel> load_model(std::istream& in) {
  std::string magic;
  std::getline(in, magic);
  if (magic != "fedsim-checkpoint v1") {
    throw InputError("load_model: bad header '" + magic + "'");
  }
  std::string tag;
  in >> tag;
  if (tag != "arch") throw InputError("load_model: expected 'arch'");
  ModelArch arch;
  std::string slope;
  std::size_t nhidden = 0;
  in >> arch.input_dim >> arch.feature_dim >> arch.num_classes >> slope >>
      nhidden;
  arch.leaky_slope = std::strtod(slope.c_str(), nullptr);
  arch.hidden_dims.resize(nhidden);
  for (std::size_t i = 0; i < nhidden; ++i) in >> arch.hidden_dims[i];

  DecoupledModel model;
  std::size_t count = 0;
  in >> tag >> count;
  if (tag != "extractor") throw InputError("load_model: expected 'extractor'");
  model.extractor = read_param_vector(in, count);
  in >> tag >> count;
  if (tag != "classifier") {
    throw InputError("load_model: expected 'classifier'");
  }
  model.classifier = read_param_vector(in, count);
  return {arch, model};
}

std::pair<ModelArch, DecoupledModel> load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("load_model: cannot open " + path);
  return load_model(f);
}

}  // namespace fedsim
