#ifndef FEDSIM_ORCHESTRATOR_HPP_
#define FEDSIM_ORCHESTRATOR_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/config.hpp"
#include "fedsim/fedcore.hpp"
#include "fedsim/server.hpp"

namespace fedsim {

struct ExperimentConfig {
  AlgorithmKind algorithm = AlgorithmKind::kFedeCouple;
  std::uint64_t rounds = 200;
  std::size_t num_clients = 20;
  double rho_lo = 1.0;   // participation ratio; a per-round range when
  double rho_hi = 1.0;   // rho_lo < rho_hi
  bool scheme_overridden = false;
  AggregationScheme scheme = AggregationScheme::kCentroidSimilarity;
  std::uint64_t master_seed = 1;
  std::size_t repeats = 1;

  // model (input_dim / num_classes resolved from the dataset)
  std::vector<std::size_t> hidden_dims = {128, 128};
  std::size_t feature_dim = 128;
  double leaky_slope = 0.01;

  // data source
  bool synthetic = true;
  std::size_t classes = 10;
  std::size_t data_dim = 32;
  std::size_t per_class = 200;
  double spread = 0.5;
  std::string idx_images;
  std::string idx_labels;

  PartitionSpec partition;  // num_clients/seed filled at run time
  Hyperparams hp;

  std::string out_dir;
  bool save_models = false;
  bool save_partition = true;

  AggregationScheme resolved_scheme() const;
  void validate() const;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_document(const ConfigDoc& doc);
};

// Per-participant view of one round, parallel to `participants`.
struct ClientRoundStats {
  double acc_pre = 0.0;
  double acc_post = 0.0;
  double loss = 0.0;  // mean per-step training loss
  double ce = 0.0;
  double kd = 0.0;      // lambda-weighted
  double center = 0.0;  // mu-weighted
};

struct RoundReport {
  std::uint64_t round = 0;  // 1-based
  std::vector<int> participants;
  std::vector<ClientRoundStats> clients;  // one entry per participant
  double mean_acc = 0.0;      // personalized accuracy after local training
  double std_acc = 0.0;       // population convention
  double mean_acc_pre = 0.0;  // before local training
  double mean_loss = 0.0;     // mean per-step training loss
  double ce = 0.0;
  double kd = 0.0;
  double center = 0.0;
  std::size_t rows = 0;  // training rows consumed this round
  std::vector<double> iota;
  bool similarity_fallback = false;
  double wall_ms = 0.0;
};

struct DescentVerdict {
  bool ok = true;
  std::vector<std::uint64_t> violations;
};

struct RunArtifact {
  nlohmann::json config_snapshot;
  ModelArch resolved_arch;
  std::vector<RoundReport> rounds;
  WeightDeltaLog deltas;
  DescentVerdict descent;
  double feature_cohesion = 0.0;  // mean test-feature distance to anchors
  std::string partition_text;
  DecoupledModel final_global;
  std::vector<DecoupledModel> final_clients;
};

// Runs the full T-round loop. Deterministic given (cfg, cfg.master_seed);
// FEDLAB_THREADS caps parallel client workers (0 or unset = sequential).
RunArtifact run_experiment(const ExperimentConfig& cfg);

// ok iff the 5-round moving average of mean training loss never rises by
// more than `slack` from round 5 onward.
DescentVerdict descent_monitor(const std::vector<double>& mean_losses,
                               double slack = 1e-3);

void write_metrics_csv(std::ostream& out, const RunArtifact& artifact);
void write_weight_deltas_csv(std::ostream& out, const RunArtifact& artifact);
nlohmann::json artifact_to_json(const RunArtifact& artifact);

// Writes metrics.csv, weights_delta.csv, run.json, partition.txt and the
// optional models/ directory under `dir`.
void write_artifact(const RunArtifact& artifact, const std::string& dir);

struct SummaryRow {
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;  // population convention
  double min = 0.0;
  double max = 0.0;
};

// Multi-seed summary (final accuracy, final loss, cohesion). The artifacts
// must share a config modulo master_seed.
std::vector<SummaryRow> summarize(const std::vector<nlohmann::json>& runs);
void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows);

// Shortest round-trip decimal form; used for all CSV numbers.
std::string format_double(double v);

}  // namespace fedsim

#endif  // FEDSIM_ORCHESTRATOR_HPP_
