#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sauvolanet/image.hpp"

namespace sauvolanet {

using Rng = std::mt19937_64;

class DataError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

struct ImagePair {
	std::string id;
	GrayImage image;
	BinaryMap truth;
};

// Decodes PNG/TIFF/BMP (gray, RGB or RGBA, 8 or 16 bit). Colour is reduced
// with 0.299 R + 0.587 G + 0.114 B; 8-bit values are divided by 255.
GrayImage load_gray(const std::filesystem::path& path);

// Ground truth: gray level < 128 is ink (-1), everything else background (+1).
BinaryMap load_truth(const std::filesystem::path& path);
BinaryMap truth_from_gray(const GrayImage& gray);

ImagePair load_pair(const std::filesystem::path& image_path, const std::filesystem::path& truth_path);

// Ink written as 0, background as 255.
void save_binary(const BinaryMap& map, const std::filesystem::path& path);
// 8-bit grayscale, value * 255 rounded.
void save_gray(const GrayImage& image, const std::filesystem::path& path);
// 16-bit grayscale PNG of values clamped to [0, 1].
void save_threshold_map(const ThresholdMap& map, const std::filesystem::path& path);

struct PatchSpec {
	std::size_t top = 0;
	std::size_t left = 0;
	std::size_t size = 0;
	bool operator==(const PatchSpec&) const = default;
};

struct FlipSpec {
	bool horizontal = false;
	bool vertical = false;
	bool operator==(const FlipSpec&) const = default;
};

// Mirror-pads (edge pixel not repeated) each axis shorter than `size`,
// splitting the padding evenly before/after.
ImagePair reflect_pad(const ImagePair& pair, std::size_t size);

// Offsets are uniform over the valid range of the padded extent.
PatchSpec draw_patch(std::size_t height, std::size_t width, std::size_t size, Rng& rng);
ImagePair extract_patch(const ImagePair& padded, const PatchSpec& spec);
ImagePair sample_patch(const ImagePair& pair, std::size_t size, Rng& rng);

FlipSpec draw_flips(Rng& rng);
ImagePair apply_flips(const ImagePair& pair, const FlipSpec& flips);
ImagePair augment(const ImagePair& pair, Rng& rng);

struct ManifestEntry {
	std::filesystem::path image;
	std::filesystem::path truth;
};

struct DatasetManifest {
	std::string name;
	std::vector<ManifestEntry> entries;
	std::string partition;
};

// Text manifest: one `image<TAB>truth` pair per line, `#` comments allowed.
// Relative paths resolve against `root` when given, else the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path,
                              const std::optional<std::filesystem::path>& root = std::nullopt);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

std::vector<ImagePair> load_dataset(const DatasetManifest& manifest);

struct Fold {
	std::string test_name;
	std::vector<DatasetManifest> train;
	DatasetManifest test;
};

std::vector<Fold> leave_one_out_folds(const std::vector<DatasetManifest>& manifests);

// Flag value if present, else $SAUVOLA_DATA_ROOT, else nothing.
std::optional<std::filesystem::path> resolve_dataset_root(const std::optional<std::filesystem::path>& flag);

} // namespace sauvolanet
