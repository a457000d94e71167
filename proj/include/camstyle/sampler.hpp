#ifndef CAMSTYLE_SAMPLER_HPP_
#define CAMSTYLE_SAMPLER_HPP_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "json.hpp"

#include "camstyle/core/random.hpp"

namespace camstyle::sampler {

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mini-batch recipe: batch_size slots split ratio_real : ratio_fake.
struct BatchSpec {
  int batch_size = 128;
  int ratio_real = 3;
  int ratio_fake = 1;
  std::uint64_t seed = 0;
  /// Draw the per-epoch fake subset once and reuse it every epoch.
  bool freeze_fake_selection = false;

  void validate() const;
  bool exact() const { return batch_size % (ratio_real + ratio_fake) == 0; }
};

void to_json(nlohmann::json& j, const BatchSpec& s);
void from_json(const nlohmann::json& j, BatchSpec& s);

struct BatchCounts {
  int real = 0;
  int fake = 0;
};

/// Slot split of the k-th batch of an epoch. Uses cumulative rounding of batch_size*M/(M+N), so
/// batch sizes are constant, consecutive batches differ by at most one real slot and the real
/// share over any prefix of batches is within one slot of exact.
BatchCounts batch_counts(const BatchSpec& spec, int batch_index = 0);

/// Positions into the real and fake pools.
struct Batch {
  std::vector<std::size_t> real;
  std::vector<std::size_t> fake;
  /// Fewer slots than batch_counts() asked for.
  bool partial = false;
};

/// Draws one batch uniformly without replacement from each pool. The generator is taken by value
/// and the advanced state is handed back with the batch.
std::pair<Batch, Rng> compose_batch(std::span<const std::size_t> real_pool, std::span<const std::size_t> fake_pool,
                                    const BatchSpec& spec, Rng rng, int batch_index = 0);

/// (N/M) / (L-1): the share of all fakes visited per epoch.
double epoch_fake_fraction(int ratio_real, int ratio_fake, int num_cameras);

/// ceil(fake_count * N / (M (L-1))), in exact integer arithmetic.
std::size_t epoch_fake_count(std::size_t fake_count, int ratio_real, int ratio_fake, int num_cameras);

struct EpochPlan {
  std::vector<Batch> batches;
  std::size_t real_slots = 0;
  std::size_t fake_slots = 0;
  /// More fakes requested than exist: the fake set is visited more than once this epoch.
  bool fakes_repeated = false;
  bool has_partial_batch = false;
};

/// Every real image once, in a fresh order, interleaved with epoch_fake_count() fakes, batch by
/// batch per batch_counts(). Leftover fakes after the reals run out join the last batch.
EpochPlan epoch_plan(std::size_t real_count, std::size_t fake_count, const BatchSpec& spec, int num_cameras, int epoch = 0);

}  // namespace camstyle::sampler

#endif  // CAMSTYLE_SAMPLER_HPP_
