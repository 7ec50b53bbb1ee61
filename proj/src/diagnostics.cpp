#include "fedsim/diagnostics.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "fedsim/data.hpp"
#include "fedsim/fedcore.hpp"
#include "fedsim/model.hpp"
#include "fedsim/numerics.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/server.hpp"

namespace fedsim {

namespace {

Tensor randn(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.normal(0.0, scale);
  return t;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), 1e-8);
}

ParamVector single(const char* name, Tensor t) {
  ParamVector pv;
  pv.segments.push_back({name, std::move(t)});
  return pv;
}

constexpr double kEps = 1e-5;
constexpr double kTol = 1e-5;

}  // namespace

bool run_gradcheck(std::ostream& out, int cases) {
  const auto start = std::chrono::steady_clock::now();
  bool all_ok = true;

  auto check_op = [&](const char* name,
                      const std::function<double(std::uint64_t)>& one_case) {
    double worst = 0.0;
    for (std::uint64_t c = 0; c < static_cast<std::uint64_t>(cases); ++c) {
      worst = std::max(worst, one_case(c));
    }
    const bool ok = worst <= kTol;
    all_ok &= ok;
    out << (ok ? "[ok]   " : "[FAIL] ") << name << "  worst rel err "
        << worst << "\n";
  };

  check_op("affine_forward (input/weight/bias)", [&](std::uint64_t c) {
    Rng rng(derive_seed(101, StreamPurpose::kModelInit, c));
    const std::size_t b = 1 + rng.uniform_int(4);
    const std::size_t n = 1 + rng.uniform_int(8);
    const std::size_t m = 1 + rng.uniform_int(8);
    Tensor x = randn({b, n}, rng);
    Tensor w = randn({n, m}, rng);
    Tensor bias = randn({m}, rng);
    Tensor cot = randn({b, m}, rng);
    AffineGrads g = affine_backward(x, w, cot);
    ParamVector p;
    p.segments.push_back({"x", x});
    p.segments.push_back({"w", w});
    p.segments.push_back({"b", bias});
    ParamVector fd = finite_diff_grad(
        [&](const ParamVector& q) {
          Tensor o = affine_forward(q.segments[0].value, q.segments[1].value,
                                    q.segments[2].value);
          double s = 0.0;
          for (std::size_t i = 0; i < o.data.size(); ++i) {
            s += o.data[i] * cot.data[i];
          }
          return s;
        },
        p, kEps);
    double err = rel_error(g.input.data, fd.segments[0].value.data);
    err = std::max(err, rel_error(g.weight.data, fd.segments[1].value.data));
    err = std::max(err, rel_error(g.bias.data, fd.segments[2].value.data));
    return err;
  });

  check_op("leaky_relu", [&](std::uint64_t c) {
    Rng rng(derive_seed(102, StreamPurpose::kModelInit, c));
    const std::size_t n = 1 + rng.uniform_int(32);
    const double slope = 0.01 + rng.uniform01() * 0.5;
    Tensor x = randn({1, n}, rng);
    Tensor cot = randn({1, n}, rng);
    Tensor g = leaky_relu_backward(x, cot, slope);
    ParamVector p = single("x", x);
    ParamVector fd = finite_diff_grad(
        [&](const ParamVector& q) {
          Tensor o = leaky_relu(q.segments[0].value, slope);
          double s = 0.0;
          for (std::size_t i = 0; i < o.data.size(); ++i) {
            s += o.data[i] * cot.data[i];
          }
          return s;
        },
        p, kEps);
    return rel_error(g.data, fd.segments[0].value.data);
  });

  check_op("softmax_temp + cross_entropy", [&](std::uint64_t c) {
    Rng rng(derive_seed(103, StreamPurpose::kModelInit, c));
    const std::size_t b = 1 + rng.uniform_int(4);
    const std::size_t m = 2 + rng.uniform_int(7);
    Tensor logits = randn({b, m}, rng, 2.0);
    std::vector<int> labels(b);
    for (auto& y : labels) y = static_cast<int>(rng.uniform_int(m));
    LossResult ce = cross_entropy(logits, labels);
    ParamVector p = single("l", logits);
    ParamVector fd = finite_diff_grad(
        [&](const ParamVector& q) {
          return cross_entropy(q.segments[0].value, labels).value;
        },
        p, kEps);
    return rel_error(ce.grad.data, fd.segments[0].value.data);
  });

  check_op("kd_loss (student side)", [&](std::uint64_t c) {
    Rng rng(derive_seed(104, StreamPurpose::kModelInit, c));
    const std::size_t b = 1 + rng.uniform_int(4);
    const std::size_t m = 2 + rng.uniform_int(7);
    const double tau = 0.5 + rng.uniform01() * 3.0;
    Tensor teacher = randn({b, m}, rng, 2.0);
    Tensor student = randn({b, m}, rng, 2.0);
    LossResult kd = kd_loss(teacher, student, tau);
    ParamVector p = single("s", student);
    ParamVector fd = finite_diff_grad(
        [&](const ParamVector& q) {
          return kd_loss(teacher, q.segments[0].value, tau).value;
        },
        p, kEps);
    return rel_error(kd.grad.data, fd.segments[0].value.data);
  });

  check_op("center_loss", [&](std::uint64_t c) {
    Rng rng(derive_seed(105, StreamPurpose::kModelInit, c));
    const std::size_t b = 1 + rng.uniform_int(6);
    const std::size_t k = 1 + rng.uniform_int(10);
    Tensor f = randn({b, k}, rng);
    std::map<int, std::vector<double>> anchors;
    std::vector<int> labels(b);
    for (auto& y : labels) y = static_cast<int>(rng.uniform_int(4));
    for (int cls = 0; cls < 4; ++cls) {
      std::vector<double> a(k);
      for (double& v : a) v = rng.normal();
      anchors[cls] = a;
    }
    LossResult cl = center_loss(f, labels, anchors);
    ParamVector p = single("f", f);
    ParamVector fd = finite_diff_grad(
        [&](const ParamVector& q) {
          return center_loss(q.segments[0].value, labels, anchors).value;
        },
        p, kEps);
    return rel_error(cl.grad.data, fd.segments[0].value.data);
  });

  check_op("backward_selective (full objective)", [&](std::uint64_t c) {
    Rng rng(derive_seed(106, StreamPurpose::kModelInit, c));
    ModelArch arch;
    arch.input_dim = 2 + rng.uniform_int(3);
    arch.hidden_dims = {2 + rng.uniform_int(3)};
    arch.feature_dim = 2 + rng.uniform_int(3);
    arch.num_classes = 2 + rng.uniform_int(3);
    DecoupledModel m = init_model(arch, derive_seed(107, StreamPurpose::kModelInit, c));
    const std::size_t b = 1 + rng.uniform_int(4);
    Tensor x = randn({b, arch.input_dim}, rng);
    std::vector<int> labels(b);
    for (auto& y : labels) {
      y = static_cast<int>(rng.uniform_int(arch.num_classes));
    }
    Tensor teacher = randn({b, arch.num_classes}, rng);
    std::map<int, std::vector<double>> anchors;
    for (std::size_t cls = 0; cls < arch.num_classes; ++cls) {
      std::vector<double> a(arch.feature_dim);
      for (double& v : a) v = rng.normal();
      anchors[static_cast<int>(cls)] = a;
    }
    LossSpec spec;
    spec.lambda = 0.8;
    spec.teacher_logits = &teacher;
    spec.tau = 2.0;
    spec.mu = 2.0;
    spec.anchors = &anchors;

    auto loss_of = [&](const DecoupledModel& model) {
      Tensor feats = extract(arch, model.extractor, x);
      Tensor logits = classify(arch, model.classifier, feats);
      return cross_entropy(logits, labels).value +
             spec.lambda * kd_loss(teacher, logits, spec.tau).value +
             spec.mu * center_loss(feats, labels, anchors).value;
    };

    double err = 0.0;
    // ExtractorOnly
    {
      BackwardResult br = backward_selective(arch, m, x, labels, spec,
                                             TrainTarget::kExtractorOnly);
      ParamVector fd = finite_diff_grad(
          [&](const ParamVector& q) {
            DecoupledModel probe = m;
            probe.extractor = q;
            return loss_of(probe);
          },
          m.extractor, kEps);
      err = std::max(err,
                     rel_error(br.grads.extractor.flatten(), fd.flatten()));
    }
    // ClassifierOnly
    {
      BackwardResult br = backward_selective(arch, m, x, labels, spec,
                                             TrainTarget::kClassifierOnly);
      ParamVector fd = finite_diff_grad(
          [&](const ParamVector& q) {
            DecoupledModel probe = m;
            probe.classifier = q;
            return loss_of(probe);
          },
          m.classifier, kEps);
      err = std::max(err,
                     rel_error(br.grads.classifier.flatten(), fd.flatten()));
    }
    // Both
    {
      BackwardResult br =
          backward_selective(arch, m, x, labels, spec, TrainTarget::kBoth);
      ParamVector fd = finite_diff_grad(
          [&](const ParamVector& q) {
            DecoupledModel probe = m;
            probe.set_combined(q);
            return loss_of(probe);
          },
          m.combined(), kEps);
      ParamVector got = br.grads.extractor;
      for (const auto& s : br.grads.classifier.segments) {
        got.segments.push_back(s);
      }
      err = std::max(err, rel_error(got.flatten(), fd.flatten()));
    }
    return err;
  });

  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  out << (all_ok ? "gradcheck passed" : "gradcheck FAILED") << " ("
      << cases << " cases per op, " << secs << " s)\n";
  return all_ok;
}

bool run_selftest(std::ostream& out) {
  bool all_ok = true;
  auto check = [&](const char* name, bool ok) {
    all_ok &= ok;
    out << (ok ? "[ok]   " : "[FAIL] ") << name << "\n";
  };

  {
    Rng rng(1);
    ParamVector p;
    p.segments.push_back({"a", randn({3, 4}, rng)});
    p.segments.push_back({"b", randn({5}, rng)});
    ParamVector q = p;
    q.fill(0.0);
    q.assign_from_flat(p.flatten());
    check("param flatten/unflatten round-trip", q.bitwise_equal(p));
  }
  {
    Rng rng(2);
    Tensor logits = randn({4, 6}, rng, 3.0);
    Tensor probs = softmax_temp(logits, 2.0);
    bool ok = true;
    for (std::size_t b = 0; b < 4; ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) s += probs.at(b, j);
      ok &= std::abs(s - 1.0) < 1e-12;
    }
    check("softmax rows sum to one", ok);
  }
  {
    Rng rng(3);
    Tensor a = randn({3, 5}, rng);
    Tensor b = randn({3, 5}, rng);
    bool ok = kd_loss(a, b, 2.0).value >= 0.0 && kd_loss(a, a, 2.0).value == 0.0;
    check("kd_loss Gibbs inequality and zero at equality", ok);
  }
  {
    Rng rng(4);
    ParamVector u = single("w", randn({1, 9}, rng));
    ParamVector v = single("w", randn({1, 9}, rng));
    ParamVector cu = u;
    cu.scale(7.25);
    bool ok = std::abs(cosine_similarity(cu, v) - cosine_similarity(u, v)) <
              1e-12;
    check("cosine similarity scale invariance", ok);
  }
  {
    Dataset ds = gen_synthetic(6, 5, 200, 0.4, 5);
    bool ok = true;
    for (PartitionKind kind :
         {PartitionKind::kIid, PartitionKind::kWeakPathological,
          PartitionKind::kPathological, PartitionKind::kDirichlet}) {
      PartitionSpec spec;
      spec.kind = kind;
      spec.num_clients = 4;
      spec.seed = 11;
      spec.samples_per_client = 40;
      spec.classes_per_client = 2;
      spec.beta = 0.5;
      Partition p = make_partition(ds, spec);
      std::set<std::size_t> seen;
      for (const auto& c : p.clients) {
        for (std::size_t idx : c.all()) {
          ok &= idx < ds.size();
          ok &= seen.insert(idx).second;
        }
        ok &= !c.train.empty();
      }
    }
    check("partitioners: disjoint, valid, nonempty", ok);
  }
  {
    std::vector<double> img(16, 0.25);
    img[3] = 1.0;
    auto inv2 = apply_augment(apply_augment(img, 4, 4, AugmentKind::kInvert, 0),
                              4, 4, AugmentKind::kInvert, 0);
    bool ok = true;
    for (std::size_t i = 0; i < img.size(); ++i) {
      ok &= std::abs(inv2[i] - img[i]) < 1e-15;
    }
    Rng rng(6);
    for (int t = 0; t < 50; ++t) {
      auto o = augment(img, std::pair<std::size_t, std::size_t>{4, 4}, rng);
      for (double v : o) ok &= v >= 0.0 && v <= 1.0;
    }
    check("augmentation: involution and range", ok);
  }
  {
    Rng rng(7);
    std::vector<ParamVector> models;
    std::vector<std::size_t> sizes;
    for (int i = 0; i < 5; ++i) {
      models.push_back(single("w", randn({1, 10}, rng)));
      sizes.push_back(3 + static_cast<std::size_t>(i));
    }
    CentroidAggregate agg = aggregate_centroid_similarity(models, sizes);
    double sum = 0.0;
    for (double v : agg.iota) sum += v;
    check("centroid aggregation weights sum to one",
          std::abs(sum - 1.0) < 1e-10);
  }
  {
    // Selective-update contract on a tiny world.
    Dataset ds = gen_synthetic(3, 4, 20, 0.5, 8);
    ModelArch arch;
    arch.input_dim = 4;
    arch.hidden_dims = {5};
    arch.feature_dim = 4;
    arch.num_classes = 3;
    PartitionSpec spec;
    spec.kind = PartitionKind::kIid;
    spec.num_clients = 1;
    spec.seed = 13;
    Partition p = make_partition(ds, spec);
    ClientState c;
    c.id = 0;
    c.train = p.clients[0].train;
    c.test = p.clients[0].test;
    DecoupledModel global = init_model(arch, 17);
    c.model = global;
    Hyperparams hp;
    hp.e_cl = 1;
    hp.e_fe = 1;
    hp.batch_size = 8;

    struct Probe : RoundObserver {
      ParamVector theta_start;
      bool theta_ok = false;
      bool teacher_ok = true;
      ParamVector snap;
      void before_student_step(const ParamVector& t) override { snap = t; }
      void after_student_step(const ParamVector& t) override {
        teacher_ok &= t.bitwise_equal(snap);
      }
      void after_classifier_phase(const DecoupledModel& m,
                                  const ParamVector&) override {
        theta_ok = m.extractor.bitwise_equal(theta_start);
      }
    } probe;
    probe.theta_start = c.model.extractor;
    fedecouple_local_round(ds, arch, c, global, hp, 19, 1, &probe);
    check("selective updates: theta frozen in classifier phase",
          probe.theta_ok);
    check("distillation teacher untouched by the student step",
          probe.teacher_ok);
  }
  {
    Rng a(9), b(9);
    bool ok = sample_clients(12, 0.25, a) == sample_clients(12, 0.25, b);
    check("client sampling determinism", ok);
  }

  out << (all_ok ? "selftest passed" : "selftest FAILED") << "\n";
  return all_ok;
}

}  // namespace fedsim
