#include "fedsim/orchestrator.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) return "0";
  return std::string(buf, ptr);
}

AggregationScheme ExperimentConfig::resolved_scheme() const {
  if (scheme_overridden) return scheme;
  return algorithm == AlgorithmKind::kFedeCouple
             ? AggregationScheme::kCentroidSimilarity
             : AggregationScheme::kSizeWeighted;
}

void ExperimentConfig::validate() const {
  if (rounds < 1) throw ConfigError("run.rounds must be >= 1");
  if (num_clients < 1) throw ConfigError("run.clients must be >= 1");
  if (repeats < 1) throw ConfigError("run.repeats must be >= 1");
  if (!(rho_lo > 0.0 && rho_lo <= 1.0 && rho_hi > 0.0 && rho_hi <= 1.0)) {
    throw ConfigError("run.participation values must be in (0,1]");
  }
  if (rho_lo > rho_hi) throw ConfigError("run.participation: lo > hi");
  if (feature_dim < 1) throw ConfigError("model.feature_dim must be >= 1");
  for (std::size_t h : hidden_dims) {
    if (h < 1) throw ConfigError("model.hidden_dims entries must be >= 1");
  }
  if (synthetic) {
    if (classes < 1 || data_dim < 1 || per_class < 1) {
      throw ConfigError("data: classes, dim, per_class must be >= 1");
    }
    if (spread < 0.0) throw ConfigError("data.spread must be >= 0");
  } else {
    if (idx_images.empty() || idx_labels.empty()) {
      throw ConfigError("data: idx source needs idx_images and idx_labels");
    }
  }
  hp.validate();
}

json ExperimentConfig::to_json() const {
  json j;
  j["run"] = {
      {"algorithm", algorithm_name(algorithm)},
      {"rounds", rounds},
      {"clients", num_clients},
      {"participation_lo", rho_lo},
      {"participation_hi", rho_hi},
      {"aggregation", scheme_overridden ? scheme_name(scheme) : "auto"},
      {"seed", master_seed},
      {"repeats", repeats},
  };
  j["model"] = {
      {"hidden_dims", hidden_dims},
      {"feature_dim", feature_dim},
      {"leaky_slope", leaky_slope},
  };
  j["data"] = {
      {"source", synthetic ? "synthetic" : "idx"},
      {"classes", classes},
      {"dim", data_dim},
      {"per_class", per_class},
      {"spread", spread},
      {"idx_images", idx_images},
      {"idx_labels", idx_labels},
  };
  std::string kind;
  switch (partition.kind) {
    case PartitionKind::kIid: kind = "iid"; break;
    case PartitionKind::kWeakPathological: kind = "weak_pathological"; break;
    case PartitionKind::kPathological: kind = "pathological"; break;
    case PartitionKind::kDirichlet: kind = "dirichlet"; break;
  }
  j["partition"] = {
      {"kind", kind},
      {"s_percent", partition.s_percent},
      {"samples_per_client", partition.samples_per_client},
      {"dominant_classes", partition.dominant_classes},
      {"classes_per_client", partition.classes_per_client},
      {"beta", partition.beta},
      {"test_fraction", partition.test_fraction},
  };
  j["hyper"] = {
      {"eta", hp.eta},
      {"lambda", hp.lambda},
      {"mu", hp.mu},
      {"tau", hp.tau},
      {"epochs_classifier", hp.e_cl},
      {"epochs_extractor", hp.e_fe},
      {"batch_size", hp.batch_size},
      {"prox_mu", hp.prox_mu},
      {"ft_epochs", hp.ft_epochs},
      {"gfa", hp.gfa},
      {"glf", hp.glf},
      {"gpc", hp.gpc},
      {"da", hp.da},
      {"static_teacher", hp.static_teacher},
  };
  j["output"] = {
      {"dir", out_dir},
      {"save_models", save_models},
      {"save_partition", save_partition},
  };
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig cfg;
  const auto& run = j.at("run");
  cfg.algorithm = algorithm_from_name(run.at("algorithm").get<std::string>());
  cfg.rounds = run.at("rounds").get<std::uint64_t>();
  cfg.num_clients = run.at("clients").get<std::size_t>();
  cfg.rho_lo = run.at("participation_lo").get<double>();
  cfg.rho_hi = run.at("participation_hi").get<double>();
  const std::string agg = run.at("aggregation").get<std::string>();
  if (agg != "auto") {
    cfg.scheme_overridden = true;
    cfg.scheme = scheme_from_name(agg);
  }
  cfg.master_seed = run.at("seed").get<std::uint64_t>();
  cfg.repeats = run.at("repeats").get<std::size_t>();

  const auto& model = j.at("model");
  cfg.hidden_dims = model.at("hidden_dims").get<std::vector<std::size_t>>();
  cfg.feature_dim = model.at("feature_dim").get<std::size_t>();
  cfg.leaky_slope = model.at("leaky_slope").get<double>();

  const auto& data = j.at("data");
  cfg.synthetic = data.at("source").get<std::string>() == "synthetic";
  cfg.classes = data.at("classes").get<std::size_t>();
  cfg.data_dim = data.at("dim").get<std::size_t>();
  cfg.per_class = data.at("per_class").get<std::size_t>();
  cfg.spread = data.at("spread").get<double>();
  cfg.idx_images = data.at("idx_images").get<std::string>();
  cfg.idx_labels = data.at("idx_labels").get<std::string>();

  const auto& part = j.at("partition");
  const std::string kind = part.at("kind").get<std::string>();
  if (kind == "iid") cfg.partition.kind = PartitionKind::kIid;
  else if (kind == "weak_pathological") cfg.partition.kind = PartitionKind::kWeakPathological;
  else if (kind == "pathological") cfg.partition.kind = PartitionKind::kPathological;
  else if (kind == "dirichlet") cfg.partition.kind = PartitionKind::kDirichlet;
  else throw ConfigError("unknown partition kind '" + kind + "'");
  cfg.partition.s_percent = part.at("s_percent").get<double>();
  cfg.partition.samples_per_client =
      part.at("samples_per_client").get<std::size_t>();
  cfg.partition.dominant_classes =
      part.at("dominant_classes").get<std::size_t>();
  cfg.partition.classes_per_client =
      part.at("classes_per_client").get<std::size_t>();
  cfg.partition.beta = part.at("beta").get<double>();
  cfg.partition.test_fraction = part.at("test_fraction").get<double>();

  const auto& hyper = j.at("hyper");
  cfg.hp.eta = hyper.at("eta").get<double>();
  cfg.hp.lambda = hyper.at("lambda").get<double>();
  cfg.hp.mu = hyper.at("mu").get<double>();
  cfg.hp.tau = hyper.at("tau").get<double>();
  cfg.hp.e_cl = hyper.at("epochs_classifier").get<std::size_t>();
  cfg.hp.e_fe = hyper.at("epochs_extractor").get<std::size_t>();
  cfg.hp.batch_size = hyper.at("batch_size").get<std::size_t>();
  cfg.hp.prox_mu = hyper.at("prox_mu").get<double>();
  cfg.hp.ft_epochs = hyper.at("ft_epochs").get<std::size_t>();
  cfg.hp.gfa = hyper.at("gfa").get<bool>();
  cfg.hp.glf = hyper.at("glf").get<bool>();
  cfg.hp.gpc = hyper.at("gpc").get<bool>();
  cfg.hp.da = hyper.at("da").get<bool>();
  cfg.hp.static_teacher = hyper.at("static_teacher").get<bool>();

  const auto& output = j.at("output");
  cfg.out_dir = output.at("dir").get<std::string>();
  cfg.save_models = output.at("save_models").get<bool>();
  cfg.save_partition = output.at("save_partition").get<bool>();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_document(const ConfigDoc& doc) {
  ExperimentConfig cfg;
  cfg.algorithm =
      algorithm_from_name(doc.get_str("run.algorithm", "fedecouple"));
  cfg.rounds = doc.get_u64("run.rounds", 200);
  cfg.num_clients = doc.get_u64("run.clients", 20);
  const std::string part_str = doc.get_str("run.participation", "1.0");
  const std::size_t colon = part_str.find(':');
  auto parse_ratio = [&](const std::string& s) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
      throw ConfigError("run.participation: '" + s + "' is not a number");
    }
    return v;
  };
  if (colon == std::string::npos) {
    cfg.rho_lo = cfg.rho_hi = parse_ratio(part_str);
  } else {
    cfg.rho_lo = parse_ratio(part_str.substr(0, colon));
    cfg.rho_hi = parse_ratio(part_str.substr(colon + 1));
  }
  const std::string agg = doc.get_str("run.aggregation", "auto");
  if (agg != "auto") {
    cfg.scheme_overridden = true;
    cfg.scheme = scheme_from_name(agg);
  }
  cfg.master_seed = doc.get_u64("run.seed", 1);
  cfg.repeats = doc.get_u64("run.repeats", 1);

  cfg.hidden_dims = doc.get_dims("model.hidden_dims", {128, 128});
  cfg.feature_dim = doc.get_u64("model.feature_dim", 128);
  cfg.leaky_slope = doc.get_double("model.leaky_slope", 0.01);

  const std::string source = doc.get_str("data.source", "synthetic");
  if (source == "synthetic") {
    cfg.synthetic = true;
  } else if (source == "idx") {
    cfg.synthetic = false;
  } else {
    throw ConfigError("data.source must be synthetic or idx");
  }
  cfg.classes = doc.get_u64("data.classes", 10);
  cfg.data_dim = doc.get_u64("data.dim", 32);
  cfg.per_class = doc.get_u64("data.per_class", 200);
  cfg.spread = doc.get_double("data.spread", 0.5);
  cfg.idx_images = doc.get_str("data.idx_images", "");
  cfg.idx_labels = doc.get_str("data.idx_labels", "");

  const std::string kind = doc.get_str("partition.kind", "iid");
  if (kind == "iid") cfg.partition.kind = PartitionKind::kIid;
  else if (kind == "weak_pathological") cfg.partition.kind = PartitionKind::kWeakPathological;
  else if (kind == "pathological") cfg.partition.kind = PartitionKind::kPathological;
  else if (kind == "dirichlet") cfg.partition.kind = PartitionKind::kDirichlet;
  else throw ConfigError("partition.kind: unknown kind '" + kind + "'");
  cfg.partition.s_percent = doc.get_double("partition.s_percent", 20.0);
  cfg.partition.samples_per_client =
      doc.get_u64("partition.samples_per_client", 600);
  cfg.partition.dominant_classes =
      doc.get_u64("partition.dominant_classes", 2);
  cfg.partition.classes_per_client =
      doc.get_u64("partition.classes_per_client", 3);
  cfg.partition.beta = doc.get_double("partition.beta", 0.5);
  cfg.partition.test_fraction =
      doc.get_double("partition.test_fraction", 0.2);

  cfg.hp.eta = doc.get_double("hyper.eta", 0.05);
  cfg.hp.lambda = doc.get_double("hyper.lambda", 0.8);
  cfg.hp.mu = doc.get_double("hyper.mu", 2.0);
  cfg.hp.tau = doc.get_double("hyper.tau", 2.0);
  cfg.hp.e_cl = doc.get_u64("hyper.epochs_classifier", 5);
  cfg.hp.e_fe = doc.get_u64("hyper.epochs_extractor", 5);
  cfg.hp.batch_size = doc.get_u64("hyper.batch_size", 32);
  cfg.hp.prox_mu = doc.get_double("hyper.prox_mu", 0.0);
  cfg.hp.ft_epochs = doc.get_u64("hyper.ft_epochs", 1);
  cfg.hp.gfa = doc.get_bool("hyper.gfa", true);
  cfg.hp.glf = doc.get_bool("hyper.glf", true);
  cfg.hp.gpc = doc.get_bool("hyper.gpc", true);
  cfg.hp.da = doc.get_bool("hyper.da", true);
  cfg.hp.static_teacher = doc.get_bool("hyper.static_teacher", false);

  cfg.out_dir = doc.get_str("output.dir", "");
  cfg.save_models = doc.get_bool("output.save_models", false);
  cfg.save_partition = doc.get_bool("output.save_partition", true);

  doc.ensure_fully_consumed();
  return cfg;
}

namespace {

std::size_t worker_count() {
  const char* env = std::getenv("FEDLAB_THREADS");
  if (env == nullptr) return 1;
  char* end = nullptr;
  long v = std::strtol(env, &end, 10);
  if (end == env || v <= 1) return 1;
  return static_cast<std::size_t>(v);
}

// Runs fn(0..n-1); client tasks are independent, so the schedule cannot
// change results.
void run_tasks(std::size_t n, std::size_t workers,
               const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto body = [&]() {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back(body);
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

DescentVerdict descent_monitor(const std::vector<double>& mean_losses,
                               double slack) {
  DescentVerdict v;
  const std::size_t t = mean_losses.size();
  if (t < 6) return v;
  auto ma = [&](std::size_t round_1based) {
    double s = 0.0;
    for (std::size_t r = round_1based - 4; r <= round_1based; ++r) {
      s += mean_losses[r - 1];
    }
    return s / 5.0;
  };
  for (std::size_t r = 6; r <= t; ++r) {
    if (ma(r) > ma(r - 1) + slack) {
      v.ok = false;
      v.violations.push_back(r);
    }
  }
  return v;
}

RunArtifact run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();

  Dataset ds =
      cfg.synthetic
          ? gen_synthetic(cfg.classes, cfg.data_dim, cfg.per_class, cfg.spread,
                          derive_seed(cfg.master_seed,
                                      StreamPurpose::kSyntheticData))
          : load_idx(cfg.idx_images, cfg.idx_labels);
  ds.validate();

  ModelArch arch;
  arch.input_dim = ds.dim();
  arch.hidden_dims = cfg.hidden_dims;
  arch.feature_dim = cfg.feature_dim;
  arch.num_classes = ds.class_count;
  arch.leaky_slope = cfg.leaky_slope;
  arch.validate();

  PartitionSpec pspec = cfg.partition;
  pspec.num_clients = cfg.num_clients;
  pspec.seed = cfg.master_seed;
  Partition part = make_partition(ds, pspec);

  DecoupledModel global =
      init_model(arch, derive_seed(cfg.master_seed, StreamPurpose::kModelInit));
  std::vector<ClientState> clients(cfg.num_clients);
  for (std::size_t i = 0; i < cfg.num_clients; ++i) {
    clients[i].id = static_cast<int>(i);
    clients[i].train = part.clients[i].train;
    clients[i].test = part.clients[i].test;
    clients[i].model = global;
  }

  RunArtifact art;
  art.config_snapshot = cfg.to_json();
  art.resolved_arch = arch;
  {
    std::ostringstream ptext;
    part.export_text(ptext);
    art.partition_text = ptext.str();
  }

  Rng sampling_rng(
      derive_seed(cfg.master_seed, StreamPurpose::kClientSampling));
  std::optional<AggregationWeights> prev_weights;
  const std::size_t workers = worker_count();
  const AggregationScheme scheme = cfg.resolved_scheme();

  for (std::uint64_t round = 1; round <= cfg.rounds; ++round) {
    try {
      const auto t0 = std::chrono::steady_clock::now();
      const double rho = (cfg.rho_lo == cfg.rho_hi)
                             ? cfg.rho_lo
                             : sampling_rng.uniform(cfg.rho_lo, cfg.rho_hi);
      const std::vector<int> participants =
          sample_clients(cfg.num_clients, rho, sampling_rng);

      struct TaskOut {
        double pre = 0.0;
        double post = 0.0;
        LocalRoundResult res;
      };
      std::vector<TaskOut> outs(participants.size());
      run_tasks(participants.size(), workers, [&](std::size_t t) {
        ClientState& c = clients[static_cast<std::size_t>(participants[t])];
        outs[t].pre = evaluate_personalized(cfg.algorithm, ds, arch, c, cfg.hp,
                                            cfg.master_seed, round, 0);
        outs[t].res =
            cfg.algorithm == AlgorithmKind::kFedeCouple
                ? fedecouple_local_round(ds, arch, c, global, cfg.hp,
                                         cfg.master_seed, round)
                : baseline_local_round(cfg.algorithm, ds, arch, c, global,
                                       cfg.hp, cfg.master_seed, round);
        outs[t].post = evaluate_personalized(cfg.algorithm, ds, arch, c,
                                             cfg.hp, cfg.master_seed, round, 1);
      });

      RoundReport rep;
      rep.round = round;
      rep.participants = participants;
      const double n = static_cast<double>(participants.size());
      for (const auto& o : outs) {
        const double steps = static_cast<double>(o.res.total_steps());
        ClientRoundStats cs;
        cs.acc_pre = o.pre;
        cs.acc_post = o.post;
        cs.loss = o.res.mean_step_loss();
        cs.ce = o.res.sum_ce() / steps;
        cs.kd = o.res.sum_kd() / steps;
        cs.center = o.res.sum_center() / steps;
        rep.clients.push_back(cs);
        rep.mean_acc += o.post / n;
        rep.mean_acc_pre += o.pre / n;
        rep.mean_loss += cs.loss / n;
        rep.ce += cs.ce / n;
        rep.kd += cs.kd / n;
        rep.center += cs.center / n;
        rep.rows += o.res.total_rows();
      }
      double var = 0.0;
      for (const auto& o : outs) {
        var += (o.post - rep.mean_acc) * (o.post - rep.mean_acc) / n;
      }
      rep.std_acc = std::sqrt(var);

      if (cfg.algorithm != AlgorithmKind::kLocalOnly) {
        std::vector<ClientUpdate> updates;
        updates.reserve(participants.size());
        for (std::size_t t = 0; t < participants.size(); ++t) {
          ClientUpdate u;
          u.client_id = participants[t];
          u.sample_count = outs[t].res.sample_count;
          u.upload = outs[t].res.upload;
          updates.push_back(std::move(u));
        }
        DispatchResult dr =
            dispatch_update(scheme, cfg.algorithm, global, updates, round);
        global = std::move(dr.global);
        rep.iota = dr.weights.iota;
        rep.similarity_fallback = dr.weights.similarity_fallback;
        if (prev_weights) {
          record_weight_delta(art.deltas, *prev_weights, dr.weights);
        }
        prev_weights = std::move(dr.weights);
      }

      rep.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      art.rounds.push_back(std::move(rep));
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error("round " + std::to_string(round) + ": " + e.what());
    }
  }

  std::vector<double> losses;
  losses.reserve(art.rounds.size());
  for (const auto& r : art.rounds) losses.push_back(r.mean_loss);
  art.descent = descent_monitor(losses);

  double cohesion = 0.0;
  for (const auto& c : clients) {
    cohesion += anchor_distance(ds, arch, c, global.extractor) /
                static_cast<double>(clients.size());
  }
  art.feature_cohesion = cohesion;
  art.final_global = std::move(global);
  art.final_clients.reserve(clients.size());
  for (auto& c : clients) art.final_clients.push_back(std::move(c.model));
  return art;
}

void write_metrics_csv(std::ostream& out, const RunArtifact& artifact) {
  out << "round,mean_acc,std_acc,mean_acc_pre,mean_loss,ce,kd,center,rows\n";
  for (const auto& r : artifact.rounds) {
    out << r.round << "," << format_double(r.mean_acc) << ","
        << format_double(r.std_acc) << "," << format_double(r.mean_acc_pre)
        << "," << format_double(r.mean_loss) << "," << format_double(r.ce)
        << "," << format_double(r.kd) << "," << format_double(r.center) << ","
        << r.rows << "\n";
  }
}

void write_weight_deltas_csv(std::ostream& out, const RunArtifact& artifact) {
  out << "round,client,delta\n";
  for (const auto& e : artifact.deltas.entries) {
    if (e.gap) continue;
    for (std::size_t i = 0; i < e.client_ids.size(); ++i) {
      out << e.round << "," << e.client_ids[i] << ","
          << format_double(e.deltas[i]) << "\n";
    }
  }
}

json artifact_to_json(const RunArtifact& artifact) {
  json j;
  j["config"] = artifact.config_snapshot;
  j["arch"] = {
      {"input_dim", artifact.resolved_arch.input_dim},
      {"hidden_dims", artifact.resolved_arch.hidden_dims},
      {"feature_dim", artifact.resolved_arch.feature_dim},
      {"num_classes", artifact.resolved_arch.num_classes},
      {"leaky_slope", artifact.resolved_arch.leaky_slope},
  };
  j["rounds"] = json::array();
  for (const auto& r : artifact.rounds) {
    json clients = json::array();
    for (std::size_t i = 0; i < r.clients.size(); ++i) {
      const auto& c = r.clients[i];
      clients.push_back({
          {"id", r.participants[i]},
          {"acc_pre", c.acc_pre},
          {"acc_post", c.acc_post},
          {"loss", c.loss},
          {"ce", c.ce},
          {"kd", c.kd},
          {"center", c.center},
      });
    }
    j["rounds"].push_back({
        {"round", r.round},
        {"participants", r.participants},
        {"clients", std::move(clients)},
        {"mean_acc", r.mean_acc},
        {"std_acc", r.std_acc},
        {"mean_acc_pre", r.mean_acc_pre},
        {"mean_loss", r.mean_loss},
        {"ce", r.ce},
        {"kd", r.kd},
        {"center", r.center},
        {"rows", r.rows},
        {"iota", r.iota},
        {"similarity_fallback", r.similarity_fallback},
        {"wall_ms", r.wall_ms},
    });
  }
  j["weight_deltas"] = json::array();
  for (const auto& e : artifact.deltas.entries) {
    j["weight_deltas"].push_back({
        {"round", e.round},
        {"gap", e.gap},
        {"clients", e.client_ids},
        {"deltas", e.deltas},
    });
  }
  j["descent"] = {
      {"verdict", artifact.descent.ok ? "ok" : "violated"},
      {"violations", artifact.descent.violations},
  };
  j["feature_cohesion"] = artifact.feature_cohesion;
  return j;
}

void write_artifact(const RunArtifact& artifact, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream f(fs::path(dir) / "metrics.csv");
    if (!f) throw Error("cannot write metrics.csv under " + dir);
    write_metrics_csv(f, artifact);
  }
  {
    std::ofstream f(fs::path(dir) / "weights_delta.csv");
    write_weight_deltas_csv(f, artifact);
  }
  {
    std::ofstream f(fs::path(dir) / "run.json");
    f << artifact_to_json(artifact).dump(2) << "\n";
  }
  const auto& cfg = artifact.config_snapshot;
  const bool save_partition = cfg.at("output").at("save_partition").get<bool>();
  if (save_partition) {
    std::ofstream f(fs::path(dir) / "partition.txt");
    f << artifact.partition_text;
  }
  const bool save_models = cfg.at("output").at("save_models").get<bool>();
  if (save_models) {
    fs::create_directories(fs::path(dir) / "models");
    save_model((fs::path(dir) / "models" / "global.ckpt").string(),
               artifact.resolved_arch, artifact.final_global);
    for (std::size_t i = 0; i < artifact.final_clients.size(); ++i) {
      save_model((fs::path(dir) / "models" /
                  ("client_" + std::to_string(i) + ".ckpt"))
                     .string(),
                 artifact.resolved_arch, artifact.final_clients[i]);
    }
  }
}

std::vector<SummaryRow> summarize(const std::vector<json>& runs) {
  if (runs.empty()) throw ConfigError("summarize: no runs given");

  auto comparable = [](const json& run) {
    json c = run.at("config");
    c["run"].erase("seed");
    c.erase("output");
    return c;
  };
  const json reference = comparable(runs[0]);
  for (const auto& run : runs) {
    if (comparable(run) != reference) {
      throw ConfigError("summarize: runs have different configs");
    }
  }

  auto collect = [&](const std::string& name,
                     const std::function<double(const json&)>& pick) {
    SummaryRow row;
    row.metric = name;
    double sum = 0.0;
    row.min = pick(runs[0]);
    row.max = row.min;
    for (const auto& run : runs) {
      const double v = pick(run);
      sum += v;
      row.min = std::min(row.min, v);
      row.max = std::max(row.max, v);
    }
    row.mean = sum / static_cast<double>(runs.size());
    double var = 0.0;
    for (const auto& run : runs) {
      const double d = pick(run) - row.mean;
      var += d * d / static_cast<double>(runs.size());
    }
    row.stddev = std::sqrt(var);
    return row;
  };

  std::vector<SummaryRow> rows;
  rows.push_back(collect("final_mean_acc", [](const json& run) {
    return run.at("rounds").back().at("mean_acc").get<double>();
  }));
  rows.push_back(collect("final_mean_acc_pre", [](const json& run) {
    return run.at("rounds").back().at("mean_acc_pre").get<double>();
  }));
  rows.push_back(collect("final_mean_loss", [](const json& run) {
    return run.at("rounds").back().at("mean_loss").get<double>();
  }));
  rows.push_back(collect("feature_cohesion", [](const json& run) {
    return run.at("feature_cohesion").get<double>();
  }));
  return rows;
}

void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "metric,mean,std,min,max\n";
  for (const auto& r : rows) {
    out << r.metric << "," << format_double(r.mean) << ","
        << format_double(r.stddev) << "," << format_double(r.min) << ","
        << format_double(r.max) << "\n";
  }
}

}  // namespace fedsim
