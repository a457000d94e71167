#ifndef CAMSTYLE_DATA_HPP_
#define CAMSTYLE_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "camstyle/core/image.hpp"

namespace camstyle::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Role { train, query, gallery };
enum class Origin { real, fake };
/// Market-style special identities: pid 0 is junk, pid -1 a distractor. Evaluation decides
/// what to do with them.
enum class IdentityFlag { none, junk, distractor };

const char* role_name(Role r);
const char* origin_name(Origin o);

struct ImageRecord {
  ImageF pixels;
  int identity = 0;
  int camera = 0;
  Role role = Role::train;
  Origin origin = Origin::real;
  std::optional<int> source_camera;  // fakes only
  IdentityFlag flag = IdentityFlag::none;
  /// Dense class index for train records, -1 otherwise.
  int label = -1;
  std::string filename;
};

struct CameraDataset {
  std::string name;
  std::vector<ImageRecord> records;
  std::set<int> cameras;
  int num_classes = 0;
  /// class_identities[label] is the original identity of that class.
  std::vector<int> class_identities;

  int num_cameras() const { return static_cast<int>(cameras.size()); }
  std::vector<std::size_t> indices(Role role) const;
  std::size_t count(Role role) const { return indices(role).size(); }
  /// Label for an identity seen in the train split, or -1.
  int label_of(int identity) const;

  /// Recomputes dense labels from the train identities (sorted ascending -> 0..C-1).
  void reindex();
  /// Throws DataError if a record breaks an invariant (camera set, pixel range, fake provenance).
  void validate() const;
};

/// Parsed `{pid}_c{cam}...` filename.
struct MarketName {
  int identity = 0;
  int camera = 0;
};

std::optional<MarketName> parse_market_filename(const std::string& filename);

inline constexpr const char* kTrainDir = "bounding_box_train";
inline constexpr const char* kQueryDir = "query";
inline constexpr const char* kGalleryDir = "bounding_box_test";

/// Reads one split directory (sorted by filename). Non-image files are ignored.
std::vector<ImageRecord> load_market_split(const std::filesystem::path& dir, Role role);

/// Loads `<root>/bounding_box_train`, `<root>/query`, `<root>/bounding_box_test`.
CameraDataset load_market_format(const std::filesystem::path& root);

/// Writes a dataset back out in the same layout (PNG files).
void export_market_format(const CameraDataset& dataset, const std::filesystem::path& root, bool force = false);

std::string market_filename(int identity, int camera, int sequence, int index, const std::string& ext = ".png");

/// Appearance signature one camera imposes on everything it records.
struct CameraStyle {
  double hue_shift = 0.0;  // fraction of a full hue rotation
  double gamma = 1.0;
  double blur_radius = 0.0;  // box-blur radius in pixels (rounded)
  double noise_sigma = 0.0;

  friend bool operator==(const CameraStyle&, const CameraStyle&) = default;
};

struct SynthConfig {
  int num_cameras = 2;
  int num_identities = 20;
  int images_per_identity_per_camera = 4;
  /// Held-out identities for query/gallery; one query per (identity, camera).
  int test_identities = 20;
  int height = 64;
  int width = 64;
  /// One style per camera; empty selects the built-in presets.
  std::vector<CameraStyle> styles;
  std::uint64_t seed = 0;
  std::string name = "synth";

  std::vector<CameraStyle> resolved_styles() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Deterministic procedural multi-camera person dataset. Train: cameras x identities x
/// images-per-identity-per-camera records; test identities are rendered the same way and split
/// into one query per (identity, camera) plus the remainder as gallery.
CameraDataset synth_generate(const SynthConfig& config);

/// Applies a camera style to an image (hue rotation, gamma, blur, noise drawn from `rng`).
ImageF apply_camera_style(const ImageF& image, const CameraStyle& style, std::uint64_t noise_seed);

/// Keeps only records whose camera is in `keep`, re-indexing classes.
CameraDataset restrict_cameras(const CameraDataset& dataset, const std::set<int>& keep);

// Image files -------------------------------------------------------------------------------

ImageF read_image(const std::filesystem::path& file);
void write_image(const std::filesystem::path& file, const ImageF& image);

}  // namespace camstyle::data

#endif  // CAMSTYLE_DATA_HPP_
