#include "camstyle/sampler.hpp"

#include <string>

namespace camstyle::sampler {

void BatchSpec::validate() const {
  if (batch_size < 1) throw SamplerError("BatchSpec: batch_size must be >= 1");
  if (ratio_real < 1) throw SamplerError("BatchSpec: ratio_real (M) must be >= 1");
  if (ratio_fake < 0) throw SamplerError("BatchSpec: ratio_fake (N) must be >= 0");
  if (static_cast<std::int64_t>(batch_size) * ratio_real < ratio_real + ratio_fake) {
    throw SamplerError("BatchSpec: batch_size " + std::to_string(batch_size) + " leaves some batches without a real image at " +
                       std::to_string(ratio_real) + ":" + std::to_string(ratio_fake));
  }
}

void to_json(nlohmann::json& j, const BatchSpec& s) {
  j = nlohmann::json{{"batch_size", s.batch_size},
                     {"ratio_real", s.ratio_real},
                     {"ratio_fake", s.ratio_fake},
                     {"seed", s.seed},
                     {"freeze_fake_selection", s.freeze_fake_selection}};
}

void from_json(const nlohmann::json& j, BatchSpec& s) {
  const BatchSpec d;
  s.batch_size = j.value("batch_size", d.batch_size);
  s.ratio_real = j.value("ratio_real", d.ratio_real);
  s.ratio_fake = j.value("ratio_fake", d.ratio_fake);
  s.seed = j.value("seed", d.seed);
  s.freeze_fake_selection = j.value("freeze_fake_selection", d.freeze_fake_selection);
}

BatchCounts batch_counts(const BatchSpec& spec, int batch_index) {
  spec.validate();
  const std::int64_t b = spec.batch_size, m = spec.ratio_real, total = spec.ratio_real + spec.ratio_fake;
  const std::int64_t k = batch_index;
  const auto reals = static_cast<int>((k + 1) * b * m / total - k * b * m / total);
  return {reals, spec.batch_size - reals};
}

std::pair<Batch, Rng> compose_batch(std::span<const std::size_t> real_pool, std::span<const std::size_t> fake_pool,
                                    const BatchSpec& spec, Rng rng, int batch_index) {
  const BatchCounts c = batch_counts(spec, batch_index);
  if (c.fake > 0 && fake_pool.empty()) throw SamplerError("compose_batch: fake pool is empty but N > 0");
  if (c.real > 0 && real_pool.empty()) throw SamplerError("compose_batch: real pool is empty");
  Batch batch;
  for (std::size_t i : rng.sample_without_replacement(real_pool.size(), static_cast<std::size_t>(c.real)))
    batch.real.push_back(real_pool[i]);
  for (std::size_t i : rng.sample_without_replacement(fake_pool.size(), static_cast<std::size_t>(c.fake)))
    batch.fake.push_back(fake_pool[i]);
  batch.partial = static_cast<int>(batch.real.size()) < c.real || static_cast<int>(batch.fake.size()) < c.fake;
  return {std::move(batch), std::move(rng)};
}

double epoch_fake_fraction(int ratio_real, int ratio_fake, int num_cameras) {
  if (ratio_real < 1 || ratio_fake < 0 || num_cameras < 2) {
    throw SamplerError("epoch_fake_fraction: need M >= 1, N >= 0, L >= 2");
  }
  return static_cast<double>(ratio_fake) / ratio_real / (num_cameras - 1);
}

std::size_t epoch_fake_count(std::size_t fake_count, int ratio_real, int ratio_fake, int num_cameras) {
  epoch_fake_fraction(ratio_real, ratio_fake, num_cameras);
  const std::size_t den = static_cast<std::size_t>(ratio_real) * static_cast<std::size_t>(num_cameras - 1);
  return (fake_count * static_cast<std::size_t>(ratio_fake) + den - 1) / den;
}

EpochPlan epoch_plan(std::size_t real_count, std::size_t fake_count, const BatchSpec& spec, int num_cameras, int epoch) {
  spec.validate();
  if (real_count == 0) throw SamplerError("epoch_plan: no real images");
  if (spec.ratio_fake > 0 && fake_count == 0) throw SamplerError("epoch_plan: N > 0 but there are no fakes");
  const auto e = static_cast<std::uint64_t>(epoch);
  Rng real_rng(derive_seed(spec.seed, {e, 1}));
  const std::vector<std::size_t> reals = real_rng.permutation(real_count);

  const std::size_t wanted = spec.ratio_fake == 0 ? 0 : epoch_fake_count(fake_count, spec.ratio_real, spec.ratio_fake, num_cameras);
  Rng fake_rng(spec.freeze_fake_selection ? derive_seed(spec.seed, {2}) : derive_seed(spec.seed, {e, 2}));
  std::vector<std::size_t> fakes;
  fakes.reserve(wanted);
  while (fake_count > 0 && fakes.size() + fake_count <= wanted) {
    const auto pass = fake_rng.permutation(fake_count);
    fakes.insert(fakes.end(), pass.begin(), pass.end());
  }
  if (fakes.size() < wanted) {
    const auto tail = fake_rng.sample_without_replacement(fake_count, wanted - fakes.size());
    fakes.insert(fakes.end(), tail.begin(), tail.end());
  }

  EpochPlan plan;
  plan.fakes_repeated = wanted > fake_count;
  std::size_t ri = 0, fi = 0;
  for (int k = 0; ri < reals.size(); ++k) {
    const BatchCounts c = batch_counts(spec, k);
    Batch b;
    const std::size_t r = std::min<std::size_t>(static_cast<std::size_t>(c.real), reals.size() - ri);
    const std::size_t f = std::min<std::size_t>(static_cast<std::size_t>(c.fake), fakes.size() - fi);
    b.real.assign(reals.begin() + static_cast<std::ptrdiff_t>(ri), reals.begin() + static_cast<std::ptrdiff_t>(ri + r));
    b.fake.assign(fakes.begin() + static_cast<std::ptrdiff_t>(fi), fakes.begin() + static_cast<std::ptrdiff_t>(fi + f));
    ri += r;
    fi += f;
    b.partial = static_cast<int>(r) < c.real || static_cast<int>(f) < c.fake;
    plan.batches.push_back(std::move(b));
  }
  if (fi < fakes.size()) {
    auto& last = plan.batches.back();
    last.fake.insert(last.fake.end(), fakes.begin() + static_cast<std::ptrdiff_t>(fi), fakes.end());
    last.partial = true;
  }
  for (const auto& b : plan.batches) {
    plan.real_slots += b.real.size();
    plan.fake_slots += b.fake.size();
    plan.has_partial_batch = plan.has_partial_batch || b.partial;
  }
  return plan;
}

}  // namespace camstyle::sampler
