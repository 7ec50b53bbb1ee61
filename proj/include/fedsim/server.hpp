#ifndef FEDSIM_SERVER_HPP_
#define FEDSIM_SERVER_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/fedcore.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class AggregationScheme { kSizeWeighted, kCentroidSimilarity };

std::string scheme_name(AggregationScheme s);
AggregationScheme scheme_from_name(const std::string& name);

struct AggregationWeights {
  std::uint64_t round = 0;
  std::vector<int> client_ids;   // ascending
  std::vector<double> alpha;     // size-proportional, sums to 1
  std::vector<double> iota;      // weights actually used, sums to 1
  bool similarity_fallback = false;  // all raw cosines were non-positive
};

struct WeightDeltaEntry {
  std::uint64_t round = 0;  // the later round of the pair
  bool gap = false;         // participant sets differed; no deltas
  std::vector<int> client_ids;
  std::vector<double> deltas;  // iota^t - iota^{t-1} per client
};

struct WeightDeltaLog {
  std::vector<WeightDeltaEntry> entries;
};

// ceil(rho * n) distinct ids, uniform without replacement, sorted.
std::vector<int> sample_clients(std::size_t n, double rho, Rng& rng);

struct ClientUpdate {
  int client_id = 0;
  std::size_t sample_count = 0;
  ModelUpload upload;
};

// sum alpha_i * omega_i with alpha_i = size_i / sum(sizes), accumulated in
// the given (ascending client id) order.
ParamVector aggregate_size_weighted(const std::vector<ParamVector>& models,
                                    const std::vector<std::size_t>& sizes);

struct CentroidAggregate {
  ParamVector global;
  std::vector<double> alpha;
  std::vector<double> iota;
  bool fallback = false;
};

// Centroid-similarity aggregation: omega_avg by size weights, cosine of
// each model against it (clamped to [1e-6, 1]), iota by normalized
// similarity. Falls back to alpha when every raw cosine is non-positive.
CentroidAggregate aggregate_centroid_similarity(
    const std::vector<ParamVector>& models,
    const std::vector<std::size_t>& sizes);

// Appends iota^t - iota^{t-1} when both rounds saw the same participants;
// otherwise records a gap marker.
void record_weight_delta(WeightDeltaLog& log,
                         const AggregationWeights& prev,
                         const AggregationWeights& curr);

struct DispatchResult {
  DecoupledModel global;
  AggregationWeights weights;
};

// Routes updates into the new global model. FedRep aggregates extractors
// only and carries the global classifier over; everything else aggregates
// the full model. Updates must arrive sorted by client id.
DispatchResult dispatch_update(AggregationScheme scheme, AlgorithmKind kind,
                               const DecoupledModel& current_global,
                               const std::vector<ClientUpdate>& updates,
                               std::uint64_t round);

}  // namespace fedsim

#endif  // FEDSIM_SERVER_HPP_
