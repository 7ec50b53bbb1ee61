#include "fedsim/server.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/errors.hpp"
#include "fedsim/numerics.hpp"

namespace fedsim {

std::string scheme_name(AggregationScheme s) {
  return s == AggregationScheme::kSizeWeighted ? "size" : "centroid";
}

AggregationScheme scheme_from_name(const std::string& name) {
  if (name == "size") return AggregationScheme::kSizeWeighted;
  if (name == "centroid") return AggregationScheme::kCentroidSimilarity;
  throw ConfigError("unknown aggregation scheme '" + name + "'");
}

std::vector<int> sample_clients(std::size_t n, double rho, Rng& rng) {
  if (!(rho > 0.0 && rho <= 1.0)) {
    throw ParameterError("sample_clients: rho must be in (0,1]");
  }
  // The nudge keeps ceil() exact when rho * n lands on an integer.
  std::size_t count = static_cast<std::size_t>(
      std::ceil(rho * static_cast<double>(n) - 1e-12));
  count = std::max<std::size_t>(1, std::min(count, n));
  std::vector<std::size_t> picked = rng.sample_without_replacement(n, count);
  std::vector<int> ids(picked.begin(), picked.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

ParamVector aggregate_size_weighted(const std::vector<ParamVector>& models,
                                    const std::vector<std::size_t>& sizes) {
  if (models.empty() || models.size() != sizes.size()) {
    throw DimensionError("aggregate_size_weighted: need one size per model");
  }
  double total = 0.0;
  for (std::size_t s : sizes) {
    if (s == 0) throw ParameterError("aggregate_size_weighted: zero size");
    total += static_cast<double>(s);
  }
  ParamVector out = models[0];
  out.fill(0.0);
  for (std::size_t i = 0; i < models.size(); ++i) {
    require_same_layout(out, models[i], "aggregate_size_weighted");
    out.add_scaled(models[i], static_cast<double>(sizes[i]) / total);
  }
  return out;
}

CentroidAggregate aggregate_centroid_similarity(
    const std::vector<ParamVector>& models,
    const std::vector<std::size_t>& sizes) {
  CentroidAggregate res;
  ParamVector avg = aggregate_size_weighted(models, sizes);

  double total = 0.0;
  for (std::size_t s : sizes) total += static_cast<double>(s);
  res.alpha.resize(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    res.alpha[i] = static_cast<double>(sizes[i]) / total;
  }

  constexpr double kEps = 1e-6;
  std::vector<double> raw(models.size());
  bool any_positive = false;
  for (std::size_t i = 0; i < models.size(); ++i) {
    raw[i] = cosine_similarity(models[i], avg);
    any_positive |= raw[i] > 0.0;
  }
  if (!any_positive) {
    res.fallback = true;
    res.iota = res.alpha;
  } else {
    res.iota.resize(models.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < models.size(); ++i) {
      res.iota[i] = std::min(1.0, std::max(kEps, raw[i]));
      sum += res.iota[i];
    }
    for (double& v : res.iota) v /= sum;
  }

  res.global = models[0];
  res.global.fill(0.0);
  for (std::size_t i = 0; i < models.size(); ++i) {
    res.global.add_scaled(models[i], res.iota[i]);
  }
  return res;
}

void record_weight_delta(WeightDeltaLog& log, const AggregationWeights& prev,
                         const AggregationWeights& curr) {
  WeightDeltaEntry entry;
  entry.round = curr.round;
  if (prev.client_ids != curr.client_ids) {
    entry.gap = true;
    log.entries.push_back(std::move(entry));
    return;
  }
  entry.client_ids = curr.client_ids;
  entry.deltas.resize(curr.iota.size());
  for (std::size_t i = 0; i < curr.iota.size(); ++i) {
    entry.deltas[i] = curr.iota[i] - prev.iota[i];
  }
  log.entries.push_back(std::move(entry));
}

DispatchResult dispatch_update(AggregationScheme scheme, AlgorithmKind kind,
                               const DecoupledModel& current_global,
                               const std::vector<ClientUpdate>& updates,
                               std::uint64_t round) {
  if (updates.empty()) {
    throw ParameterError("dispatch_update: no updates");
  }
  for (std::size_t i = 1; i < updates.size(); ++i) {
    if (updates[i - 1].client_id >= updates[i].client_id) {
      throw ParameterError("dispatch_update: updates must be sorted by id");
    }
  }

  const bool theta_only = kind == AlgorithmKind::kFedRep;
  std::vector<ParamVector> models;
  std::vector<std::size_t> sizes;
  models.reserve(updates.size());
  sizes.reserve(updates.size());
  for (const auto& u : updates) {
    if (!u.upload.extractor.has_value()) {
      throw ParameterError("dispatch_update: update without extractor from " +
                           std::to_string(u.client_id));
    }
    if (theta_only) {
      models.push_back(*u.upload.extractor);
    } else {
      if (!u.upload.classifier.has_value()) {
        throw ParameterError(
            "dispatch_update: update without classifier from " +
            std::to_string(u.client_id));
      }
      DecoupledModel m;
      m.extractor = *u.upload.extractor;
      m.classifier = *u.upload.classifier;
      models.push_back(m.combined());
    }
    sizes.push_back(u.sample_count);
  }

  DispatchResult out;
  out.global = current_global;
  out.weights.round = round;
  for (const auto& u : updates) out.weights.client_ids.push_back(u.client_id);

  ParamVector aggregated;
  if (scheme == AggregationScheme::kSizeWeighted) {
    aggregated = aggregate_size_weighted(models, sizes);
    double total = 0.0;
    for (std::size_t s : sizes) total += static_cast<double>(s);
    out.weights.alpha.resize(sizes.size());
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      out.weights.alpha[i] = static_cast<double>(sizes[i]) / total;
    }
    out.weights.iota = out.weights.alpha;
  } else {
    CentroidAggregate agg = aggregate_centroid_similarity(models, sizes);
    aggregated = std::move(agg.global);
    out.weights.alpha = std::move(agg.alpha);
    out.weights.iota = std::move(agg.iota);
    out.weights.similarity_fallback = agg.fallback;
  }

  if (theta_only) {
    if (!aggregated.layout_matches(out.global.extractor)) {
      throw DimensionError("dispatch_update: extractor layout mismatch");
    }
    out.global.extractor = aggregated;  // classifier carried over unchanged
  } else {
    out.global.set_combined(aggregated);
  }
  return out;
}

}  // namespace fedsim
