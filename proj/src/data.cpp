#include "fedsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>

#include "fedsim/errors.hpp"

namespace fedsim {

void Dataset::validate() const {
  if (samples.shape.size() != 2 || samples.shape[0] != labels.size()) {
    throw InputError("Dataset: sample/label count mismatch");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= class_count) {
      throw InputError("Dataset: label " + std::to_string(y) +
                       " out of range [0," + std::to_string(class_count) + ")");
    }
  }
  if (image_shape &&
      image_shape->first * image_shape->second != samples.shape[1]) {
    throw InputError("Dataset: image shape does not match sample dim");
  }
}

void PartitionSpec::validate(std::size_t class_count) const {
  if (num_clients < 1) throw ConfigError("PartitionSpec: num_clients >= 1");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("PartitionSpec: test_fraction in [0,1)");
  }
  switch (kind) {
    case PartitionKind::kWeakPathological:
      if (!(s_percent > 0.0 && s_percent <= 100.0)) {
        throw ConfigError("PartitionSpec: s_percent in (0,100]");
      }
      if (samples_per_client < 1) {
        throw ConfigError("PartitionSpec: samples_per_client >= 1");
      }
      if (dominant_classes < 1 || dominant_classes > class_count) {
        throw ConfigError("PartitionSpec: dominant_classes in [1,|C|]");
      }
      break;
    case PartitionKind::kPathological:
      if (classes_per_client < 1 || classes_per_client > class_count) {
        throw ConfigError("PartitionSpec: classes_per_client in [1,|C|]");
      }
      break;
    case PartitionKind::kDirichlet:
      if (!(beta > 0.0)) throw ConfigError("PartitionSpec: beta > 0");
      break;
    case PartitionKind::kIid:
      break;
  }
}

std::vector<std::size_t> ClientSplit::all() const {
  std::vector<std::size_t> out = train;
  out.insert(out.end(), test.begin(), test.end());
  return out;
}

void Partition::export_text(std::ostream& out) const {
  for (std::size_t i = 0; i < clients.size(); ++i) {
    out << "client " << i << " train:";
    for (std::size_t idx : clients[i].train) out << " " << idx;
    out << "\nclient " << i << " test:";
    for (std::size_t idx : clients[i].test) out << " " << idx;
    out << "\n";
  }
}

Dataset gen_synthetic(std::size_t classes, std::size_t dim,
                      std::size_t per_class, double spread,
                      std::uint64_t seed) {
  if (classes < 1 || dim < 1 || per_class < 1) {
    throw ConfigError("gen_synthetic: all counts must be positive");
  }
  if (spread < 0.0) throw ConfigError("gen_synthetic: spread >= 0");
  Rng rng(seed);

  // Class means on a sphere, rejected until pairwise distance >= 4 * spread.
  // The radius grows if a placement keeps failing.
  std::vector<std::vector<double>> means;
  double radius = 6.0 * spread;
  const double min_dist = 4.0 * spread;
  int stall = 0;
  while (means.size() < classes) {
    std::vector<double> dir(dim);
    double norm = 0.0;
    for (double& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) continue;
    for (double& v : dir) v = v / norm * radius;
    bool ok = true;
    for (const auto& m : means) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        d2 += (dir[j] - m[j]) * (dir[j] - m[j]);
      }
      if (std::sqrt(d2) < min_dist) {
        ok = false;
        break;
      }
    }
    if (ok) {
      means.push_back(std::move(dir));
      stall = 0;
    } else if (++stall >= 50) {
      radius *= 1.5;
      stall = 0;
    }
  }

  Dataset ds;
  ds.class_count = classes;
  ds.samples = Tensor::zeros({classes * per_class, dim});
  ds.labels.resize(classes * per_class);
  std::size_t row = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t s = 0; s < per_class; ++s, ++row) {
      double* dst = ds.samples.data.data() + row * dim;
      for (std::size_t j = 0; j < dim; ++j) {
        dst[j] = means[c][j] + spread * rng.normal();
      }
      ds.labels[row] = static_cast<int>(c);
    }
  }
  return ds;
}

namespace {

std::uint32_t read_be32(std::ifstream& f, const std::string& path,
                        long long offset) {
  unsigned char buf[4];
  f.read(reinterpret_cast<char*>(buf), 4);
  if (f.gcount() != 4) {
    throw FormatError("load_idx: short read in " + path, offset);
  }
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw InputError("load_idx: cannot open " + images_path);
  std::uint32_t magic = read_be32(img, images_path, 0);
  if (magic != 0x00000803) {
    throw FormatError("load_idx: bad image magic in " + images_path, 0);
  }
  const std::uint32_t count = read_be32(img, images_path, 4);
  const std::uint32_t rows = read_be32(img, images_path, 8);
  const std::uint32_t cols = read_be32(img, images_path, 12);
  const std::size_t pix = std::size_t(rows) * cols;
  std::vector<unsigned char> raw(std::size_t(count) * pix);
  img.read(reinterpret_cast<char*>(raw.data()),
           static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(img.gcount()) != raw.size()) {
    throw FormatError("load_idx: short pixel data in " + images_path,
                      16 + img.gcount());
  }

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw InputError("load_idx: cannot open " + labels_path);
  std::uint32_t lmagic = read_be32(lab, labels_path, 0);
  if (lmagic != 0x00000801) {
    throw FormatError("load_idx: bad label magic in " + labels_path, 0);
  }
  const std::uint32_t lcount = read_be32(lab, labels_path, 4);
  if (lcount != count) {
    throw InputError("load_idx: image count " + std::to_string(count) +
                     " != label count " + std::to_string(lcount));
  }
  std::vector<unsigned char> lraw(lcount);
  lab.read(reinterpret_cast<char*>(lraw.data()),
           static_cast<std::streamsize>(lraw.size()));
  if (static_cast<std::size_t>(lab.gcount()) != lraw.size()) {
    throw FormatError("load_idx: short label data in " + labels_path,
                      8 + lab.gcount());
  }

  Dataset ds;
  ds.samples = Tensor::zeros({count, pix});
  ds.labels.resize(count);
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    ds.labels[i] = lraw[i];
    max_label = std::max(max_label, static_cast<int>(lraw[i]));
    double* dst = ds.samples.data.data() + i * pix;
    const unsigned char* src = raw.data() + i * pix;
    for (std::size_t p = 0; p < pix; ++p) dst[p] = src[p] / 255.0;
  }
  ds.class_count = static_cast<std::size_t>(max_label) + 1;
  ds.image_shape = {rows, cols};
  return ds;
}

namespace {

// Per-class index pools shuffled once per partition seed.
std::vector<std::vector<std::size_t>> class_pools(const Dataset& ds,
                                                  Rng& rng) {
  std::vector<std::vector<std::size_t>> pools(ds.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    pools[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  }
  for (auto& p : pools) rng.shuffle(p);
  return pools;
}

// Stratified per-client train/test split; test share per class is
// round(test_fraction * n), keeping at least one train sample per class.
void split_train_test(const Dataset& ds, const PartitionSpec& spec,
                      std::vector<std::vector<std::size_t>>& assigned,
                      Partition& out) {
  out.clients.resize(assigned.size());
  for (std::size_t c = 0; c < assigned.size(); ++c) {
    std::vector<std::vector<std::size_t>> per_class(ds.class_count);
    for (std::size_t idx : assigned[c]) {
      per_class[static_cast<std::size_t>(ds.labels[idx])].push_back(idx);
    }
    Rng split_rng(derive_seed(spec.seed, StreamPurpose::kPartition, 1, c));
    for (auto& members : per_class) {
      if (members.empty()) continue;
      split_rng.shuffle(members);
      std::size_t n_test = static_cast<std::size_t>(
          std::llround(spec.test_fraction * static_cast<double>(members.size())));
      if (n_test >= members.size()) n_test = members.size() - 1;
      for (std::size_t i = 0; i < members.size(); ++i) {
        if (i < n_test) {
          out.clients[c].test.push_back(members[i]);
        } else {
          out.clients[c].train.push_back(members[i]);
        }
      }
    }
    if (out.clients[c].train.empty()) {
      throw CapacityError("partition: client " + std::to_string(c) +
                          " has an empty train split");
    }
  }
}

}  // namespace

Partition partition_iid(const Dataset& ds, const PartitionSpec& spec) {
  spec.validate(ds.class_count);
  Rng rng(derive_seed(spec.seed, StreamPurpose::kPartition, 0));
  std::vector<std::size_t> idxs(ds.size());
  for (std::size_t i = 0; i < idxs.size(); ++i) idxs[i] = i;
  rng.shuffle(idxs);

  const std::size_t n = spec.num_clients;
  if (ds.size() < n) throw CapacityError("partition_iid: fewer samples than clients");
  const std::size_t base = ds.size() / n;
  const std::size_t rem = ds.size() % n;
  std::vector<std::vector<std::size_t>> assigned(n);
  std::size_t pos = 0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t take = base + (c < rem ? 1 : 0);
    assigned[c].assign(idxs.begin() + pos, idxs.begin() + pos + take);
    pos += take;
  }
  Partition out;
  split_train_test(ds, spec, assigned, out);
  return out;
}

Partition partition_weak_pathological(const Dataset& ds,
                                      const PartitionSpec& spec) {
  spec.validate(ds.class_count);
  const std::size_t n = spec.num_clients;
  const std::size_t classes = ds.class_count;
  if (spec.samples_per_client * n > ds.size()) {
    throw CapacityError(
        "partition_weak_pathological: dataset too small for " +
        std::to_string(n) + " clients x " +
        std::to_string(spec.samples_per_client) + " samples");
  }
  Rng rng(derive_seed(spec.seed, StreamPurpose::kPartition, 0));
  auto pools = class_pools(ds, rng);
  std::vector<std::size_t> cursor(classes, 0);

  const std::size_t uniform_total = static_cast<std::size_t>(
      std::llround(static_cast<double>(spec.samples_per_client) *
                   spec.s_percent / 100.0));
  const std::size_t dominant_total =
      spec.samples_per_client - std::min(uniform_total,
                                         spec.samples_per_client);

  std::vector<std::vector<std::size_t>> assigned(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<std::size_t> need(classes, uniform_total / classes);
    for (std::size_t k = 0; k < uniform_total % classes; ++k) need[k] += 1;

    if (dominant_total > 0) {
      std::vector<std::size_t> dom =
          rng.sample_without_replacement(classes, spec.dominant_classes);
      const std::size_t base = dominant_total / dom.size();
      const std::size_t rem = dominant_total % dom.size();
      for (std::size_t k = 0; k < dom.size(); ++k) {
        need[dom[k]] += base + (k < rem ? 1 : 0);
      }
    }

    for (std::size_t k = 0; k < classes; ++k) {
      if (cursor[k] + need[k] > pools[k].size()) {
        throw CapacityError(
            "partition_weak_pathological: class " + std::to_string(k) +
            " exhausted (needs " + std::to_string(need[k]) + ", has " +
            std::to_string(pools[k].size() - cursor[k]) + ")");
      }
      for (std::size_t t = 0; t < need[k]; ++t) {
        assigned[c].push_back(pools[k][cursor[k]++]);
      }
    }
  }
  Partition out;
  split_train_test(ds, spec, assigned, out);
  return out;
}

Partition partition_pathological(const Dataset& ds,
                                 const PartitionSpec& spec) {
  spec.validate(ds.class_count);
  const std::size_t n = spec.num_clients;
  const std::size_t classes = ds.class_count;
  const std::size_t k = spec.classes_per_client;
  Rng rng(derive_seed(spec.seed, StreamPurpose::kPartition, 0));
  auto pools = class_pools(ds, rng);

  // Seeded round-robin over a shuffled class list; every class is held by
  // at least one client when n * k >= |C|.
  std::vector<std::size_t> order(classes);
  for (std::size_t i = 0; i < classes; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> holders(classes);
  std::vector<std::vector<std::size_t>> client_classes(n);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t j = 0; j < k; ++j) {
      std::size_t cls = order[(c * k + j) % classes];
      client_classes[c].push_back(cls);
      holders[cls].push_back(c);
    }
  }

  std::vector<std::vector<std::size_t>> assigned(n);
  for (std::size_t cls = 0; cls < classes; ++cls) {
    const auto& h = holders[cls];
    if (h.empty()) continue;
    const auto& pool = pools[cls];
    if (pool.size() < h.size()) {
      throw CapacityError("partition_pathological: class " +
                          std::to_string(cls) + " has " +
                          std::to_string(pool.size()) + " samples for " +
                          std::to_string(h.size()) + " holders");
    }
    const std::size_t base = pool.size() / h.size();
    const std::size_t rem = pool.size() % h.size();
    std::size_t pos = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      std::size_t take = base + (i < rem ? 1 : 0);
      for (std::size_t t = 0; t < take; ++t) {
        assigned[h[i]].push_back(pool[pos++]);
      }
    }
  }
  Partition out;
  split_train_test(ds, spec, assigned, out);
  return out;
}

Partition partition_dirichlet(const Dataset& ds, const PartitionSpec& spec) {
  spec.validate(ds.class_count);
  const std::size_t n = spec.num_clients;
  if (ds.size() < n) {
    throw CapacityError("partition_dirichlet: fewer samples than clients");
  }
  Rng rng(derive_seed(spec.seed, StreamPurpose::kPartition, 0));
  auto pools = class_pools(ds, rng);

  std::vector<std::vector<std::size_t>> assigned(n);
  for (std::size_t cls = 0; cls < ds.class_count; ++cls) {
    const auto& pool = pools[cls];
    if (pool.empty()) continue;
    std::vector<double> w(n);
    double sum = 0.0;
    for (double& v : w) {
      v = rng.gamma(spec.beta);
      sum += v;
    }
    // Split by rounded cumulative proportions.
    std::size_t prev = 0;
    double cum = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      cum += w[c] / sum;
      std::size_t bound =
          (c + 1 == n) ? pool.size()
                       : static_cast<std::size_t>(std::llround(
                             cum * static_cast<double>(pool.size())));
      bound = std::min(bound, pool.size());
      bound = std::max(bound, prev);
      for (std::size_t i = prev; i < bound; ++i) {
        assigned[c].push_back(pool[i]);
      }
      prev = bound;
    }
  }

  // Empty clients steal one sample from the largest client.
  for (;;) {
    std::size_t empty = n;
    for (std::size_t c = 0; c < n; ++c) {
      if (assigned[c].empty()) {
        empty = c;
        break;
      }
    }
    if (empty == n) break;
    std::size_t largest = 0;
    for (std::size_t c = 1; c < n; ++c) {
      if (assigned[c].size() > assigned[largest].size()) largest = c;
    }
    if (assigned[largest].size() <= 1) {
      throw CapacityError("partition_dirichlet: cannot repair empty client");
    }
    assigned[empty].push_back(assigned[largest].back());
    assigned[largest].pop_back();
  }

  Partition out;
  split_train_test(ds, spec, assigned, out);
  return out;
}

Partition make_partition(const Dataset& ds, const PartitionSpec& spec) {
  switch (spec.kind) {
    case PartitionKind::kIid:
      return partition_iid(ds, spec);
    case PartitionKind::kWeakPathological:
      return partition_weak_pathological(ds, spec);
    case PartitionKind::kPathological:
      return partition_pathological(ds, spec);
    case PartitionKind::kDirichlet:
      return partition_dirichlet(ds, spec);
  }
  throw ConfigError("make_partition: unknown kind");
}

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

std::vector<double> rotate_quarter(const std::vector<double>& x,
                                   std::size_t n) {
  // One clockwise quarter turn of an n x n grid.
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      out[r * n + c] = x[(n - 1 - c) * n + r];
    }
  }
  return out;
}

}  // namespace

std::vector<double> apply_augment(const std::vector<double>& sample,
                                  std::size_t h, std::size_t w,
                                  AugmentKind kind, double intensity,
                                  std::size_t crop_dy, std::size_t crop_dx) {
  std::vector<double> out(sample.size());
  switch (kind) {
    case AugmentKind::kCrop: {
      // Zero-pad by p, then crop back at offset (crop_dy, crop_dx).
      const long long p = std::llround(intensity);
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          const long long sr = static_cast<long long>(r) +
                               static_cast<long long>(crop_dy) - p;
          const long long sc = static_cast<long long>(c) +
                               static_cast<long long>(crop_dx) - p;
          out[r * w + c] =
              (sr >= 0 && sr < static_cast<long long>(h) && sc >= 0 &&
               sc < static_cast<long long>(w))
                  ? sample[static_cast<std::size_t>(sr) * w +
                           static_cast<std::size_t>(sc)]
                  : 0.0;
        }
      }
      return out;
    }
    case AugmentKind::kFlip: {
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          out[r * w + c] = sample[r * w + (w - 1 - c)];
        }
      }
      return out;
    }
    case AugmentKind::kRotate: {
      long long k = std::llround(intensity) % 4;
      if (h != w && k != 2) k = 2;  // only 180 degrees preserves the grid
      if (k == 2) {
        for (std::size_t i = 0; i < sample.size(); ++i) {
          out[i] = sample[sample.size() - 1 - i];
        }
        return out;
      }
      out = sample;
      for (long long t = 0; t < k; ++t) out = rotate_quarter(out, h);
      return out;
    }
    case AugmentKind::kBrightness: {
      for (std::size_t i = 0; i < sample.size(); ++i) {
        out[i] = clamp01(sample[i] + intensity);
      }
      return out;
    }
    case AugmentKind::kInvert: {
      for (std::size_t i = 0; i < sample.size(); ++i) {
        out[i] = 1.0 - sample[i];
      }
      return out;
    }
  }
  throw ConfigError("apply_augment: unknown kind");
}

std::vector<double> augment(
    const std::vector<double>& sample,
    const std::optional<std::pair<std::size_t, std::size_t>>& image_shape,
    Rng& rng) {
  if (!image_shape) return sample;  // identity for vector-only data
  const std::size_t h = image_shape->first;
  const std::size_t w = image_shape->second;
  switch (rng.uniform_int(5)) {
    case 0: {
      const std::size_t p = 1 + rng.uniform_int(2);
      const std::size_t dy = rng.uniform_int(2 * p + 1);
      const std::size_t dx = rng.uniform_int(2 * p + 1);
      return apply_augment(sample, h, w, AugmentKind::kCrop,
                           static_cast<double>(p), dy, dx);
    }
    case 1:
      return apply_augment(sample, h, w, AugmentKind::kFlip, 0.0);
    case 2: {
      const double k = static_cast<double>(1 + rng.uniform_int(3));
      return apply_augment(sample, h, w, AugmentKind::kRotate, k);
    }
    case 3: {
      const double b = rng.uniform(-0.2, 0.2);
      return apply_augment(sample, h, w, AugmentKind::kBrightness, b);
    }
    default:
      return apply_augment(sample, h, w, AugmentKind::kInvert, 0.0);
  }
}

std::vector<std::vector<std::size_t>> make_epoch_batches(
    const std::vector<std::size_t>& indices, std::size_t batch_size,
    Rng& rng) {
  if (batch_size < 1) throw ConfigError("make_epoch_batches: batch_size >= 1");
  std::vector<std::size_t> order = indices;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t pos = 0; pos < order.size(); pos += batch_size) {
    const std::size_t end = std::min(pos + batch_size, order.size());
    batches.emplace_back(order.begin() + pos, order.begin() + end);
  }
  return batches;
}

Batch gather(const Dataset& ds, const std::vector<std::size_t>& indices) {
  const std::size_t d = ds.dim();
  Batch b;
  b.x = Tensor::zeros({indices.size(), d});
  b.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::memcpy(b.x.data.data() + i * d,
                ds.samples.data.data() + indices[i] * d, d * sizeof(double));
    b.labels[i] = ds.labels[indices[i]];
  }
  return b;
}

Batch materialize_batch(const Dataset& ds,
                        const std::vector<std::size_t>& batch_indices,
                        bool augment_on, Rng& aug_rng) {
  const std::size_t d = ds.dim();
  const std::size_t n = batch_indices.size();
  Batch b;
  b.x = Tensor::zeros({augment_on ? 2 * n : n, d});
  b.labels.resize(augment_on ? 2 * n : n);
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(b.x.data.data() + i * d,
                ds.samples.data.data() + batch_indices[i] * d,
                d * sizeof(double));
    b.labels[i] = ds.labels[batch_indices[i]];
  }
  if (augment_on) {
    std::vector<double> row(d);
    for (std::size_t i = 0; i < n; ++i) {
      std::memcpy(row.data(), ds.samples.data.data() + batch_indices[i] * d,
                  d * sizeof(double));
      std::vector<double> aug = augment(row, ds.image_shape, aug_rng);
      std::memcpy(b.x.data.data() + (n + i) * d, aug.data(),
                  d * sizeof(double));
      b.labels[n + i] = ds.labels[batch_indices[i]];
    }
  }
  return b;
}

}  // namespace fedsim
