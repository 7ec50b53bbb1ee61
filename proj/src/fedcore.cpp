#include "fedsim/fedcore.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/errors.hpp"
#include "fedsim/numerics.hpp"

namespace fedsim {

std::string algorithm_name(AlgorithmKind kind) {
  switch (kind) {
    case AlgorithmKind::kLocalOnly: return "local";
    case AlgorithmKind::kFedAvg: return "fedavg";
    case AlgorithmKind::kFtFedAvg: return "ft_fedavg";
    case AlgorithmKind::kFedProx: return "fedprox";
    case AlgorithmKind::kFedRep: return "fedrep";
    case AlgorithmKind::kFedeCouple: return "fedecouple";
  }
  throw ConfigError("algorithm_name: unknown kind");
}

AlgorithmKind algorithm_from_name(const std::string& name) {
  if (name == "local") return AlgorithmKind::kLocalOnly;
  if (name == "fedavg") return AlgorithmKind::kFedAvg;
  if (name == "ft_fedavg") return AlgorithmKind::kFtFedAvg;
  if (name == "fedprox") return AlgorithmKind::kFedProx;
  if (name == "fedrep") return AlgorithmKind::kFedRep;
  if (name == "fedecouple") return AlgorithmKind::kFedeCouple;
  throw ConfigError("unknown algorithm '" + name + "'");
}

void Hyperparams::validate() const {
  if (eta < 0.0) throw ConfigError("Hyperparams: eta >= 0");
  if (tau <= 0.0) throw ConfigError("Hyperparams: tau > 0");
  if (lambda < 0.0 || mu < 0.0) throw ConfigError("Hyperparams: lambda, mu >= 0");
  if (e_cl < 1 || e_fe < 1) throw ConfigError("Hyperparams: e_cl, e_fe >= 1");
  if (batch_size < 1) throw ConfigError("Hyperparams: batch_size >= 1");
  if (prox_mu < 0.0) throw ConfigError("Hyperparams: prox_mu >= 0");
}

std::size_t LocalRoundResult::total_steps() const {
  std::size_t n = 0;
  for (const auto& t : trace) n += t.steps;
  return n;
}

std::size_t LocalRoundResult::total_rows() const {
  std::size_t n = 0;
  for (const auto& t : trace) n += t.rows;
  return n;
}

double LocalRoundResult::sum_ce() const {
  double v = 0.0;
  for (const auto& t : trace) v += t.ce;
  return v;
}

double LocalRoundResult::sum_kd() const {
  double v = 0.0;
  for (const auto& t : trace) v += t.kd;
  return v;
}

double LocalRoundResult::sum_center() const {
  double v = 0.0;
  for (const auto& t : trace) v += t.center;
  return v;
}

double LocalRoundResult::sum_prox() const {
  double v = 0.0;
  for (const auto& t : trace) v += t.prox;
  return v;
}

double LocalRoundResult::mean_step_loss() const {
  const std::size_t steps = total_steps();
  if (steps == 0) return 0.0;
  return (sum_ce() + sum_kd() + sum_center() + sum_prox()) /
         static_cast<double>(steps);
}

std::map<int, std::vector<double>> compute_anchors(
    const Dataset& ds, const ModelArch& arch, const ParamVector& theta,
    const std::vector<std::size_t>& train_indices) {
  Batch all = gather(ds, train_indices);
  Tensor features = extract(arch, theta, all.x);
  const std::size_t k = arch.feature_dim;

  std::map<int, std::vector<double>> sums;
  std::map<int, std::size_t> counts;
  for (std::size_t i = 0; i < all.labels.size(); ++i) {
    auto& acc = sums[all.labels[i]];
    if (acc.empty()) acc.assign(k, 0.0);
    const double* row = features.data.data() + i * k;
    for (std::size_t j = 0; j < k; ++j) acc[j] += row[j];
    counts[all.labels[i]]++;
  }
  for (auto& [cls, acc] : sums) {
    const double n = static_cast<double>(counts[cls]);
    for (double& v : acc) v /= n;
  }
  return sums;
}

namespace {

// One classifier-only SGD step on cached features. Returns the loss parts.
struct HeadStepResult {
  double ce = 0.0;
  double kd = 0.0;  // lambda-weighted
};

HeadStepResult head_step(const ModelArch& arch, ParamVector& phi,
                         const Tensor& features, const std::vector<int>& labels,
                         double eta, double lambda, const Tensor* teacher_logits,
                         double tau) {
  Tensor logits = classify(arch, phi, features);
  LossResult ce = cross_entropy(logits, labels);
  HeadStepResult out;
  out.ce = ce.value;
  Tensor dlogits = ce.grad;
  if (lambda != 0.0) {
    LossResult kd = kd_loss(*teacher_logits, logits, tau);
    out.kd = lambda * kd.value;
    for (std::size_t i = 0; i < dlogits.data.size(); ++i) {
      dlogits.data[i] += lambda * kd.grad.data[i];
    }
  }
  AffineGrads g = affine_backward(features, phi.segments[0].value, dlogits);
  ParamVector grads;
  grads.segments.push_back({phi.segments[0].name, std::move(g.weight)});
  grads.segments.push_back({phi.segments[1].name, std::move(g.bias)});
  sgd_step(phi, grads, eta);
  return out;
}

}  // namespace

LocalRoundResult fedecouple_local_round(const Dataset& ds,
                                        const ModelArch& arch,
                                        ClientState& client,
                                        const DecoupledModel& omega_global,
                                        const Hyperparams& hp,
                                        std::uint64_t master_seed,
                                        std::uint64_t round,
                                        RoundObserver* observer) {
  hp.validate();
  if (client.train.empty()) {
    throw InvariantError("fedecouple_local_round: empty train split");
  }
  Rng batch_rng(derive_seed(master_seed, StreamPurpose::kBatching,
                            static_cast<std::uint64_t>(client.id), round));
  Rng aug_rng(derive_seed(master_seed, StreamPurpose::kAugmentation,
                          static_cast<std::uint64_t>(client.id), round));

  LocalRoundResult res;
  res.sample_count = client.train.size();

  // (1) locally trained copy of the global classifier (the teacher)
  ParamVector phi_g = omega_global.classifier;

  // (2) classifier phase on features from the previous round's extractor
  for (std::size_t e = 0; e < hp.e_cl; ++e) {
    EpochTrace local_tr{TrainPhase::kClassifierLocal, e, 0, 0, 0, 0, 0, 0};
    EpochTrace global_tr{TrainPhase::kClassifierGlobal, e, 0, 0, 0, 0, 0, 0};
    auto batches = make_epoch_batches(client.train, hp.batch_size, batch_rng);
    for (const auto& idxs : batches) {
      Batch b = materialize_batch(ds, idxs, hp.da, aug_rng);
      Tensor features = extract(arch, client.model.extractor, b.x);

      Tensor teacher_logits;
      if (hp.gpc) {
        const ParamVector& teacher_phi =
            hp.static_teacher ? omega_global.classifier : phi_g;
        teacher_logits = classify(arch, teacher_phi, features);
      }

      if (observer) observer->before_student_step(phi_g);
      HeadStepResult s = head_step(arch, client.model.classifier, features,
                                   b.labels, hp.eta, hp.gpc ? hp.lambda : 0.0,
                                   hp.gpc ? &teacher_logits : nullptr, hp.tau);
      if (observer) observer->after_student_step(phi_g);
      local_tr.steps++;
      local_tr.rows += b.x.rows();
      local_tr.ce += s.ce;
      local_tr.kd += s.kd;

      if (hp.gpc) {
        HeadStepResult t = head_step(arch, phi_g, features, b.labels, hp.eta,
                                     0.0, nullptr, hp.tau);
        global_tr.steps++;
        global_tr.rows += b.x.rows();
        global_tr.ce += t.ce;
      }
    }
    res.trace.push_back(local_tr);
    if (hp.gpc) res.trace.push_back(global_tr);
  }
  if (observer) observer->after_classifier_phase(client.model, phi_g);

  // (3) adopt the global extractor; anchors come from it
  client.model.extractor = omega_global.extractor;
  client.anchors.clear();
  if (hp.gfa) {
    client.anchors = compute_anchors(ds, arch, omega_global.extractor,
                                     client.train);
  }
  LossSpec ext_spec;
  ext_spec.mu = hp.gfa ? hp.mu : 0.0;
  ext_spec.anchors = hp.gfa ? &client.anchors : nullptr;

  // (4) one epoch against the frozen global classifier
  if (hp.glf) {
    EpochTrace tr{TrainPhase::kExtractorFrozen, 0, 0, 0, 0, 0, 0, 0};
    DecoupledModel probe;
    probe.extractor = client.model.extractor;
    probe.classifier = omega_global.classifier;
    auto batches = make_epoch_batches(client.train, hp.batch_size, batch_rng);
    for (const auto& idxs : batches) {
      Batch b = materialize_batch(ds, idxs, hp.da, aug_rng);
      BackwardResult br = backward_selective(arch, probe, b.x, b.labels,
                                             ext_spec,
                                             TrainTarget::kExtractorOnly);
      sgd_step(probe.extractor, br.grads.extractor, hp.eta);
      tr.steps++;
      tr.rows += b.x.rows();
      tr.ce += br.ce;
      tr.center += br.center;
    }
    client.model.extractor = probe.extractor;
    res.trace.push_back(tr);
    if (observer) observer->after_frozen_epoch(client.model);
  }

  // (5) extractor epochs against the freshly trained local classifier
  for (std::size_t e = 0; e < hp.e_fe; ++e) {
    EpochTrace tr{TrainPhase::kExtractorLocal, e, 0, 0, 0, 0, 0, 0};
    auto batches = make_epoch_batches(client.train, hp.batch_size, batch_rng);
    for (const auto& idxs : batches) {
      Batch b = materialize_batch(ds, idxs, hp.da, aug_rng);
      BackwardResult br = backward_selective(arch, client.model, b.x, b.labels,
                                             ext_spec,
                                             TrainTarget::kExtractorOnly);
      sgd_step(client.model.extractor, br.grads.extractor, hp.eta);
      tr.steps++;
      tr.rows += b.x.rows();
      tr.ce += br.ce;
      tr.center += br.center;
    }
    res.trace.push_back(tr);
  }

  res.upload.extractor = client.model.extractor;
  res.upload.classifier = client.model.classifier;
  return res;
}

namespace {

// Shared joint-training loop for Local/FedAvg/FedProx.
void train_full_model(const Dataset& ds, const ModelArch& arch,
                      ClientState& client, const Hyperparams& hp,
                      std::size_t epochs, const DecoupledModel* prox_anchor,
                      Rng& batch_rng, Rng& aug_rng, LocalRoundResult& res) {
  for (std::size_t e = 0; e < epochs; ++e) {
    EpochTrace tr{TrainPhase::kFullModel, e, 0, 0, 0, 0, 0, 0};
    auto batches = make_epoch_batches(client.train, hp.batch_size, batch_rng);
    for (const auto& idxs : batches) {
      Batch b = materialize_batch(ds, idxs, hp.da, aug_rng);
      BackwardResult br = backward_selective(arch, client.model, b.x, b.labels,
                                             LossSpec{}, TrainTarget::kBoth);
      double prox_val = 0.0;
      if (prox_anchor != nullptr && hp.prox_mu != 0.0) {
        auto add_prox = [&](ParamVector& grads, const ParamVector& params,
                            const ParamVector& anchor) {
          for (std::size_t s = 0; s < grads.segments.size(); ++s) {
            double* g = grads.segments[s].value.data.data();
            const double* p = params.segments[s].value.data.data();
            const double* a = anchor.segments[s].value.data.data();
            const std::size_t n = grads.segments[s].value.numel();
            for (std::size_t j = 0; j < n; ++j) {
              const double diff = p[j] - a[j];
              g[j] += hp.prox_mu * diff;
              prox_val += 0.5 * hp.prox_mu * diff * diff;
            }
          }
        };
        add_prox(br.grads.extractor, client.model.extractor,
                 prox_anchor->extractor);
        add_prox(br.grads.classifier, client.model.classifier,
                 prox_anchor->classifier);
      }
      sgd_step(client.model.extractor, br.grads.extractor, hp.eta);
      sgd_step(client.model.classifier, br.grads.classifier, hp.eta);
      tr.steps++;
      tr.rows += b.x.rows();
      tr.ce += br.ce;
      tr.prox += prox_val;
    }
    res.trace.push_back(tr);
  }
}

}  // namespace

LocalRoundResult baseline_local_round(AlgorithmKind kind, const Dataset& ds,
                                      const ModelArch& arch,
                                      ClientState& client,
                                      const DecoupledModel& omega_global,
                                      const Hyperparams& hp,
                                      std::uint64_t master_seed,
                                      std::uint64_t round) {
  hp.validate();
  if (client.train.empty()) {
    throw InvariantError("baseline_local_round: empty train split");
  }
  Rng batch_rng(derive_seed(master_seed, StreamPurpose::kBatching,
                            static_cast<std::uint64_t>(client.id), round));
  Rng aug_rng(derive_seed(master_seed, StreamPurpose::kAugmentation,
                          static_cast<std::uint64_t>(client.id), round));
  LocalRoundResult res;
  res.sample_count = client.train.size();

  switch (kind) {
    case AlgorithmKind::kLocalOnly: {
      train_full_model(ds, arch, client, hp, hp.e_cl + hp.e_fe, nullptr,
                       batch_rng, aug_rng, res);
      break;  // nothing uploaded
    }
    case AlgorithmKind::kFedAvg:
    case AlgorithmKind::kFtFedAvg: {
      client.model = omega_global;
      train_full_model(ds, arch, client, hp, hp.e_cl + hp.e_fe, nullptr,
                       batch_rng, aug_rng, res);
      res.upload.extractor = client.model.extractor;
      res.upload.classifier = client.model.classifier;
      break;
    }
    case AlgorithmKind::kFedProx: {
      client.model = omega_global;
      train_full_model(ds, arch, client, hp, hp.e_cl + hp.e_fe, &omega_global,
                       batch_rng, aug_rng, res);
      res.upload.extractor = client.model.extractor;
      res.upload.classifier = client.model.classifier;
      break;
    }
    case AlgorithmKind::kFedRep: {
      client.model.extractor = omega_global.extractor;
      for (std::size_t e = 0; e < hp.e_cl; ++e) {
        EpochTrace tr{TrainPhase::kHeadOnly, e, 0, 0, 0, 0, 0, 0};
        auto batches =
            make_epoch_batches(client.train, hp.batch_size, batch_rng);
        for (const auto& idxs : batches) {
          Batch b = materialize_batch(ds, idxs, hp.da, aug_rng);
          BackwardResult br =
              backward_selective(arch, client.model, b.x, b.labels, LossSpec{},
                                 TrainTarget::kClassifierOnly);
          sgd_step(client.model.classifier, br.grads.classifier, hp.eta);
          tr.steps++;
          tr.rows += b.x.rows();
          tr.ce += br.ce;
        }
        res.trace.push_back(tr);
      }
      for (std::size_t e = 0; e < hp.e_fe; ++e) {
        EpochTrace tr{TrainPhase::kBodyOnly, e, 0, 0, 0, 0, 0, 0};
        auto batches =
            make_epoch_batches(client.train, hp.batch_size, batch_rng);
        for (const auto& idxs : batches) {
          Batch b = materialize_batch(ds, idxs, hp.da, aug_rng);
          BackwardResult br =
              backward_selective(arch, client.model, b.x, b.labels, LossSpec{},
                                 TrainTarget::kExtractorOnly);
          sgd_step(client.model.extractor, br.grads.extractor, hp.eta);
          tr.steps++;
          tr.rows += b.x.rows();
          tr.ce += br.ce;
        }
        res.trace.push_back(tr);
      }
      res.upload.extractor = client.model.extractor;  // classifier stays home
      break;
    }
    case AlgorithmKind::kFedeCouple:
      throw ConfigError("baseline_local_round: use fedecouple_local_round");
  }
  return res;
}

double evaluate(const Dataset& ds, const ModelArch& arch,
                const DecoupledModel& model,
                const std::vector<std::size_t>& test_indices) {
  if (test_indices.empty()) {
    throw InputError("evaluate: empty test split");
  }
  Batch b = gather(ds, test_indices);
  Tensor logits = forward(arch, model, b.x);
  const std::size_t classes = arch.num_classes;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    const double* row = logits.data.data() + i * classes;
    std::size_t best = 0;
    for (std::size_t j = 1; j < classes; ++j) {
      if (row[j] > row[best]) best = j;  // ties go to the lowest index
    }
    if (static_cast<int>(best) == b.labels[i]) correct++;
  }
  return static_cast<double>(correct) / static_cast<double>(b.labels.size());
}

double evaluate_personalized(AlgorithmKind kind, const Dataset& ds,
                             const ModelArch& arch, const ClientState& client,
                             const Hyperparams& hp, std::uint64_t master_seed,
                             std::uint64_t round, int measurement) {
  if (kind != AlgorithmKind::kFtFedAvg || hp.ft_epochs == 0) {
    return evaluate(ds, arch, client.model, client.test);
  }
  // Fine-tune a throwaway copy on the train split, then measure.
  DecoupledModel copy = client.model;
  Rng ft_rng(derive_seed(master_seed, StreamPurpose::kEvaluation,
                         static_cast<std::uint64_t>(client.id),
                         round * 2 + static_cast<std::uint64_t>(measurement)));
  for (std::size_t e = 0; e < hp.ft_epochs; ++e) {
    auto batches = make_epoch_batches(client.train, hp.batch_size, ft_rng);
    for (const auto& idxs : batches) {
      Batch b = gather(ds, idxs);
      BackwardResult br = backward_selective(arch, copy, b.x, b.labels,
                                             LossSpec{}, TrainTarget::kBoth);
      sgd_step(copy.extractor, br.grads.extractor, hp.eta);
      sgd_step(copy.classifier, br.grads.classifier, hp.eta);
    }
  }
  return evaluate(ds, arch, copy, client.test);
}

double anchor_distance(const Dataset& ds, const ModelArch& arch,
                       const ClientState& client,
                       const ParamVector& anchor_theta) {
  auto anchors = compute_anchors(ds, arch, anchor_theta, client.train);
  Batch b = gather(ds, client.test);
  Tensor features = extract(arch, client.model.extractor, b.x);
  const std::size_t k = arch.feature_dim;
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    auto it = anchors.find(b.labels[i]);
    if (it == anchors.end()) continue;  // class unseen in train
    const double* row = features.data.data() + i * k;
    double d2 = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      d2 += (row[j] - it->second[j]) * (row[j] - it->second[j]);
    }
    total += std::sqrt(d2);
    counted++;
  }
  if (counted == 0) return 0.0;
  return total / static_cast<double>(counted);
}

}  // namespace fedsim
