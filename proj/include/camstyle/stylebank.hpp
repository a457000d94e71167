#ifndef CAMSTYLE_STYLEBANK_HPP_
#define CAMSTYLE_STYLEBANK_HPP_

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "camstyle/cyclegan.hpp"
#include "camstyle/data.hpp"

namespace camstyle::stylebank {

using cyclegan::CameraPair;
using cyclegan::CameraPairModel;
using cyclegan::Direction;

class BankError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number of unordered camera pairs, C(L, 2).
constexpr std::size_t pair_count(int num_cameras) {
  return num_cameras < 2 ? 0 : static_cast<std::size_t>(num_cameras) * (num_cameras - 1) / 2;
}

std::vector<CameraPair> all_pairs(const std::set<int>& cameras);

/// One translation model per unordered camera pair.
class StyleBank {
 public:
  void add(std::shared_ptr<const CameraPairModel> model);
  const CameraPairModel* find(int camera_a, int camera_b) const;
  bool covers(int camera_a, int camera_b) const { return find(camera_a, camera_b) != nullptr; }

  /// Cameras that appear in at least one pair.
  const std::set<int>& cameras_covered() const { return cameras_; }
  std::size_t size() const { return pairs_.size(); }
  const std::map<CameraPair, std::shared_ptr<const CameraPairModel>>& pairs() const { return pairs_; }

  /// The models whose pair lies entirely inside `cameras` (shared, not copied).
  StyleBank restricted_to(const std::set<int>& cameras) const;

  /// Writes `bank.json` plus one checkpoint per pair into `dir`.
  void save(const std::filesystem::path& dir) const;
  static StyleBank load(const std::filesystem::path& dir);

 private:
  std::map<CameraPair, std::shared_ptr<const CameraPairModel>> pairs_;
  std::set<int> cameras_;
};

inline constexpr const char* kBankIndex = "bank.json";
std::string checkpoint_name(const CameraPair& pair);

using PairProgress = std::function<void(const CameraPair&, const cyclegan::EpochLog&)>;

/// Trains every pair among `subset` (all dataset cameras when empty). Each pair gets its own seed
/// derived from config.seed and the pair.
StyleBank train_all_pairs(const data::CameraDataset& dataset, const std::optional<std::set<int>>& subset,
                          const cyclegan::CycleGanConfig& config, const PairProgress& progress = {});

/// G translates the pair's first camera into its second; F the other way.
Direction direction_for(int source_camera, int target_camera);

/// Output size of generated fakes.
enum class FakeResolution {
  cyclegan_square,  // keep the translator's square output; consumers resize
  source_size,      // resize the output back to the source image's size
};

const char* resolution_name(FakeResolution r);
FakeResolution parse_resolution(const std::string& name);

struct FakeProvenance {
  std::size_t source_index = 0;  // index into dataset.records
  std::string source_filename;
  CameraPair pair;
  Direction direction = Direction::g;
};

struct GeneratedFakes {
  std::vector<data::ImageRecord> fakes;
  std::vector<FakeProvenance> provenance;  // parallel to fakes
  /// (source image, covered target) combinations with no trained pair.
  std::size_t skipped = 0;
};

/// For every real train record from camera c and every other covered camera c', one fake
/// translated by pair {c, c'}. Ordered by source record, then target camera.
GeneratedFakes generate_fakes(const data::CameraDataset& dataset, const StyleBank& bank,
                              FakeResolution resolution = FakeResolution::cyclegan_square);

inline constexpr const char* kManifestName = "manifest.jsonl";

/// Images go to `<dir>/bounding_box_train`, one manifest line per fake to `<dir>/manifest.jsonl`.
std::filesystem::path export_fakes(const GeneratedFakes& fakes, const std::filesystem::path& dir, bool force = false);

/// Reads an exported fake set back (labels resolved against `reference`, when given).
std::vector<data::ImageRecord> load_fakes(const std::filesystem::path& dir, const data::CameraDataset* reference = nullptr);

}  // namespace camstyle::stylebank

#endif  // CAMSTYLE_STYLEBANK_HPP_
