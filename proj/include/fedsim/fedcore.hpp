#ifndef FEDSIM_FEDCORE_HPP_
#define FEDSIM_FEDCORE_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

enum class AlgorithmKind {
  kLocalOnly,
  kFedAvg,
  kFtFedAvg,
  kFedProx,
  kFedRep,
  kFedeCouple,
};

std::string algorithm_name(AlgorithmKind kind);
AlgorithmKind algorithm_from_name(const std::string& name);

struct Hyperparams {
  double eta = 0.05;
  double lambda = 0.8;      // distillation weight
  double mu = 2.0;          // center-loss weight
  double tau = 2.0;         // distillation temperature
  std::size_t e_cl = 5;     // classifier epochs
  std::size_t e_fe = 5;     // extractor epochs
  std::size_t batch_size = 32;
  bool gfa = true;          // anchors + center term
  bool glf = true;          // frozen-global-classifier epoch
  bool gpc = true;          // distillation + local teacher adaptation
  bool da = true;           // batch augmentation
  bool static_teacher = false;  // distill from the round-start classifier
  double prox_mu = 0.0;     // FedProx proximal weight
  std::size_t ft_epochs = 1;  // evaluation-time fine-tune budget

  void validate() const;
};

struct ClientState {
  int id = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  DecoupledModel model;
  // Recomputed from the round's global extractor; never carried over.
  std::map<int, std::vector<double>> anchors;
};

enum class TrainPhase {
  kClassifierLocal,   // local classifier, ce + distillation
  kClassifierGlobal,  // locally adapted global classifier, ce
  kExtractorFrozen,   // extractor vs frozen global classifier
  kExtractorLocal,    // extractor vs trained local classifier
  kFullModel,         // joint training (baselines)
  kHeadOnly,          // classifier-only baseline phase
  kBodyOnly,          // extractor-only baseline phase
};

struct EpochTrace {
  TrainPhase phase;
  std::size_t epoch = 0;
  std::size_t steps = 0;
  std::size_t rows = 0;
  double ce = 0.0;      // summed over steps
  double kd = 0.0;      // lambda-weighted sum
  double center = 0.0;  // mu-weighted sum
  double prox = 0.0;    // proximal term sum
};

struct ModelUpload {
  std::optional<ParamVector> extractor;
  std::optional<ParamVector> classifier;
};

struct LocalRoundResult {
  std::vector<EpochTrace> trace;
  std::size_t sample_count = 0;  // |D_i| train samples
  ModelUpload upload;

  std::size_t total_steps() const;
  std::size_t total_rows() const;
  double sum_ce() const;
  double sum_kd() const;
  double sum_center() const;
  double sum_prox() const;
  double mean_step_loss() const;
};

// Test/diagnostic hooks into the round schedule.
struct RoundObserver {
  virtual void before_student_step(const ParamVector& /*teacher_phi*/) {}
  virtual void after_student_step(const ParamVector& /*teacher_phi*/) {}
  virtual void after_classifier_phase(const DecoupledModel& /*model*/,
                                      const ParamVector& /*phi_g*/) {}
  virtual void after_frozen_epoch(const DecoupledModel& /*model*/) {}
  virtual ~RoundObserver() = default;
};

// Per-class mean feature of the client's train split under `theta`,
// full batch, no augmentation. Classes absent from the split are omitted.
std::map<int, std::vector<double>> compute_anchors(
    const Dataset& ds, const ModelArch& arch, const ParamVector& theta,
    const std::vector<std::size_t>& train_indices);

// One local round of the decoupled protocol:
//   (1) adopt the global classifier as a locally trained teacher copy,
//   (2) E_cl epochs: local classifier with ce + distillation, then the
//       teacher copy with ce,
//   (3) adopt the global extractor and recompute anchors,
//   (4) one epoch of extractor training against the frozen global
//       classifier (skipped when glf is off),
//   (5) E_fe epochs of extractor training against the trained local
//       classifier; center term active while gfa is on.
LocalRoundResult fedecouple_local_round(const Dataset& ds,
                                        const ModelArch& arch,
                                        ClientState& client,
                                        const DecoupledModel& omega_global,
                                        const Hyperparams& hp,
                                        std::uint64_t master_seed,
                                        std::uint64_t round,
                                        RoundObserver* observer = nullptr);

LocalRoundResult baseline_local_round(AlgorithmKind kind, const Dataset& ds,
                                      const ModelArch& arch,
                                      ClientState& client,
                                      const DecoupledModel& omega_global,
                                      const Hyperparams& hp,
                                      std::uint64_t master_seed,
                                      std::uint64_t round);

// Argmax-of-logits accuracy on the given split; ties break toward the
// lowest class index. Never mutates the model.
double evaluate(const Dataset& ds, const ModelArch& arch,
                const DecoupledModel& model,
                const std::vector<std::size_t>& test_indices);

// Accuracy of the client's personalized model. FT-FedAvg fine-tunes a
// throwaway copy on the train split before measuring; `measurement`
// disambiguates the RNG stream (0 = pre-training, 1 = post-training).
double evaluate_personalized(AlgorithmKind kind, const Dataset& ds,
                             const ModelArch& arch, const ClientState& client,
                             const Hyperparams& hp, std::uint64_t master_seed,
                             std::uint64_t round, int measurement);

// Mean distance of test features (under the client's extractor) to their
// class anchor computed from `anchor_theta` over the train split.
double anchor_distance(const Dataset& ds, const ModelArch& arch,
                       const ClientState& client,
                       const ParamVector& anchor_theta);

}  // namespace fedsim

#endif  // FEDSIM_FEDCORE_HPP_
