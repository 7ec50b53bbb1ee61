#ifndef FEDSIM_DATA_HPP_
#define FEDSIM_DATA_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/rng.hpp"
#include "fedsim/tensor.hpp"

namespace fedsim {

struct Dataset {
  Tensor samples;            // [M, d]
  std::vector<int> labels;   // length M, values in [0, class_count)
  std::size_t class_count = 0;
  // Set when samples are flattened (h, w) pixel grids in [0, 1].
  std::optional<std::pair<std::size_t, std::size_t>> image_shape;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return samples.shape.size() == 2 ? samples.shape[1] : 0; }
  void validate() const;
};

enum class PartitionKind {
  kIid,
  kWeakPathological,
  kPathological,
  kDirichlet,
};

struct PartitionSpec {
  PartitionKind kind = PartitionKind::kIid;
  std::size_t num_clients = 0;
  std::uint64_t seed = 0;
  // weak pathological
  double s_percent = 20.0;
  std::size_t samples_per_client = 600;
  std::size_t dominant_classes = 2;
  // pathological
  std::size_t classes_per_client = 3;
  // dirichlet
  double beta = 0.5;
  // per-client train/test split; test share of each class
  double test_fraction = 0.2;

  void validate(std::size_t class_count) const;
};

struct ClientSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::size_t> all() const;
};

struct Partition {
  std::vector<ClientSplit> clients;

  std::size_t num_clients() const { return clients.size(); }
  // client -> index list, textual, for audit.
  void export_text(std::ostream& out) const;
};

// Class-conditional Gaussian blobs with means on a scaled sphere at pairwise
// distance >= 4 * spread. Deterministic per seed.
Dataset gen_synthetic(std::size_t classes, std::size_t dim,
                      std::size_t per_class, double spread,
                      std::uint64_t seed);

// IDX image/label pair (big-endian, magic 0x803 / 0x801). Pixels scaled to
// [0, 1]; image shape recorded.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path);

Partition make_partition(const Dataset& ds, const PartitionSpec& spec);

Partition partition_iid(const Dataset& ds, const PartitionSpec& spec);
Partition partition_weak_pathological(const Dataset& ds,
                                      const PartitionSpec& spec);
Partition partition_pathological(const Dataset& ds, const PartitionSpec& spec);
Partition partition_dirichlet(const Dataset& ds, const PartitionSpec& spec);

// The five augmentation transforms. Exactly one is drawn per call.
enum class AugmentKind { kCrop, kFlip, kRotate, kBrightness, kInvert };

// Deterministic single transform with explicit intensity, used by tests and
// by the random wrapper below. `intensity` means: crop pad (1 or 2), rotate
// quarter-turns (1..3), brightness delta in [-0.2, 0.2]; ignored otherwise.
std::vector<double> apply_augment(const std::vector<double>& sample,
                                  std::size_t h, std::size_t w,
                                  AugmentKind kind, double intensity,
                                  std::size_t crop_dy = 0,
                                  std::size_t crop_dx = 0);

// One transform drawn uniformly with a random intensity. Identity for
// vector-only samples (no image shape). Output stays in [0, 1].
std::vector<double> augment(
    const std::vector<double>& sample,
    const std::optional<std::pair<std::size_t, std::size_t>>& image_shape,
    Rng& rng);

// One epoch of batches: a seeded shuffle of `indices` cut into batches;
// the last batch may be short.
std::vector<std::vector<std::size_t>> make_epoch_batches(
    const std::vector<std::size_t>& indices, std::size_t batch_size, Rng& rng);

struct Batch {
  Tensor x;
  std::vector<int> labels;
};

// Materializes rows for a batch. With augment_on, each batch carries the
// original samples plus their augmented copies (labels shared).
Batch materialize_batch(const Dataset& ds,
                        const std::vector<std::size_t>& batch_indices,
                        bool augment_on, Rng& aug_rng);

// Rows of `ds` selected by `indices`, in order, without augmentation.
Batch gather(const Dataset& ds, const std::vector<std::size_t>& indices);

}  // namespace fedsim

#endif  // FEDSIM_DATA_HPP_
