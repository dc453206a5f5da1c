#include "sauvolanet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace sauvolanet {

namespace fs = std::filesystem;

namespace {

cv::Mat read_any(const fs::path& path)
{
	if (!fs::exists(path)) throw DataError("no such file: " + path.string());
	cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
	if (m.empty()) throw DataError("cannot decode image: " + path.string());
	return m;
}

// Encodes next to the target and renames into place, so readers never see a partial file.
void write_mat(const cv::Mat& m, const fs::path& path)
{
	const fs::path tmp = path.parent_path() / (path.stem().string() + ".partial" + path.extension().string());
	bool ok = false;
	try {
		ok = cv::imwrite(tmp.string(), m);
	} catch (const cv::Exception& e) {
		std::error_code ec;
		fs::remove(tmp, ec);
		throw DataError("cannot write " + path.string() + ": " + e.what());
	}
	std::error_code ec;
	if (ok) fs::rename(tmp, path, ec);
	if (!ok || ec) {
		fs::remove(tmp, ec);
		throw DataError("cannot write " + path.string());
	}
}

// Index into [0, n) mirrored about the first and last samples.
std::size_t reflect_index(long i, std::size_t n)
{
	if (n == 1) return 0;
	const long period = 2 * long(n - 1);
	long m = i % period;
	if (m < 0) m += period;
	return std::size_t(m < long(n) ? m : period - m);
}

} // namespace

GrayImage load_gray(const fs::path& path)
{
	const cv::Mat m = read_any(path);
	const int depth = m.depth();
	double scale = 0.0;
	if (depth == CV_8U) scale = 1.0 / 255.0;
	else if (depth == CV_16U) scale = 1.0 / 65535.0;
	else throw DataError("unsupported pixel depth in " + path.string());

	GrayImage out(std::size_t(m.rows), std::size_t(m.cols));
	const int ch = m.channels();
	for (int r = 0; r < m.rows; ++r) {
		for (int c = 0; c < m.cols; ++c) {
			auto sample = [&](int k) -> double {
				return depth == CV_8U ? double(m.ptr<std::uint8_t>(r)[c * ch + k])
				                      : double(m.ptr<std::uint16_t>(r)[c * ch + k]);
			};
			double v = 0.0;
			if (ch == 1 || ch == 2) {
				v = sample(0);
			} else if (ch == 3 || ch == 4) {
				// OpenCV stores BGR(A).
				v = 0.299 * sample(2) + 0.587 * sample(1) + 0.114 * sample(0);
			} else {
				throw DataError("unsupported channel count in " + path.string());
			}
			out.at(std::size_t(r), std::size_t(c)) = std::clamp(v * scale, 0.0, 1.0);
		}
	}
	return out;
}

BinaryMap truth_from_gray(const GrayImage& gray)
{
	BinaryMap out(gray.height, gray.width);
	for (std::size_t p = 0; p < gray.size(); ++p) {
		// Compare on the 8-bit scale so that 128/255 is background.
		out.labels[p] = gray.pixels[p] * 255.0 < 127.5 ? kInk : kBackground;
	}
	return out;
}

BinaryMap load_truth(const fs::path& path)
{
	return truth_from_gray(load_gray(path));
}

ImagePair load_pair(const fs::path& image_path, const fs::path& truth_path)
{
	ImagePair pair{image_path.stem().string(), load_gray(image_path), load_truth(truth_path)};
	if (pair.image.height != pair.truth.height || pair.image.width != pair.truth.width) {
		throw DataError("dimension mismatch: " + image_path.string() + " is " + std::to_string(pair.image.height) +
		                "x" + std::to_string(pair.image.width) + " but " + truth_path.string() + " is " +
		                std::to_string(pair.truth.height) + "x" + std::to_string(pair.truth.width));
	}
	return pair;
}

void save_binary(const BinaryMap& map, const fs::path& path)
{
	cv::Mat m(int(map.height), int(map.width), CV_8UC1);
	for (std::size_t r = 0; r < map.height; ++r)
		for (std::size_t c = 0; c < map.width; ++c) m.at<std::uint8_t>(int(r), int(c)) = map.at(r, c) == kInk ? 0 : 255;
	write_mat(m, path);
}

void save_gray(const GrayImage& image, const fs::path& path)
{
	cv::Mat m(int(image.height), int(image.width), CV_8UC1);
	for (std::size_t r = 0; r < image.height; ++r)
		for (std::size_t c = 0; c < image.width; ++c)
			m.at<std::uint8_t>(int(r), int(c)) = std::uint8_t(std::lround(std::clamp(image.at(r, c), 0.0, 1.0) * 255.0));
	write_mat(m, path);
}

void save_threshold_map(const ThresholdMap& map, const fs::path& path)
{
	cv::Mat m(int(map.height), int(map.width), CV_16UC1);
	for (std::size_t r = 0; r < map.height; ++r)
		for (std::size_t c = 0; c < map.width; ++c)
			m.at<std::uint16_t>(int(r), int(c)) =
				std::uint16_t(std::lround(std::clamp(map.at(r, c), 0.0, 1.0) * 65535.0));
	write_mat(m, path);
}

ImagePair reflect_pad(const ImagePair& pair, std::size_t size)
{
	const std::size_t H = pair.image.height, W = pair.image.width;
	if (H >= size && W >= size) return pair;
	const std::size_t out_h = std::max(H, size), out_w = std::max(W, size);
	const long top = long((out_h - H) / 2), left = long((out_w - W) / 2);
	ImagePair out{pair.id, GrayImage(out_h, out_w), BinaryMap(out_h, out_w)};
	for (std::size_t r = 0; r < out_h; ++r) {
		const std::size_t sr = reflect_index(long(r) - top, H);
		for (std::size_t c = 0; c < out_w; ++c) {
			const std::size_t sc = reflect_index(long(c) - left, W);
			out.image.at(r, c) = pair.image.at(sr, sc);
			out.truth.at(r, c) = pair.truth.at(sr, sc);
		}
	}
	return out;
}

PatchSpec draw_patch(std::size_t height, std::size_t width, std::size_t size, Rng& rng)
{
	const std::size_t h = std::max(height, size), w = std::max(width, size);
	std::uniform_int_distribution<std::size_t> rows(0, h - size), cols(0, w - size);
	const std::size_t top = rows(rng);
	const std::size_t left = cols(rng);
	return {top, left, size};
}

ImagePair extract_patch(const ImagePair& padded, const PatchSpec& spec)
{
	if (spec.top + spec.size > padded.image.height || spec.left + spec.size > padded.image.width) {
		throw std::out_of_range("patch exceeds image bounds");
	}
	ImagePair out{padded.id, GrayImage(spec.size, spec.size), BinaryMap(spec.size, spec.size)};
	for (std::size_t r = 0; r < spec.size; ++r)
		for (std::size_t c = 0; c < spec.size; ++c) {
			out.image.at(r, c) = padded.image.at(spec.top + r, spec.left + c);
			out.truth.at(r, c) = padded.truth.at(spec.top + r, spec.left + c);
		}
	return out;
}

ImagePair sample_patch(const ImagePair& pair, std::size_t size, Rng& rng)
{
	const ImagePair padded = reflect_pad(pair, size);
	return extract_patch(padded, draw_patch(padded.image.height, padded.image.width, size, rng));
}

FlipSpec draw_flips(Rng& rng)
{
	std::bernoulli_distribution coin(0.5);
	const bool h = coin(rng);
	const bool v = coin(rng);
	return {h, v};
}

ImagePair apply_flips(const ImagePair& pair, const FlipSpec& flips)
{
	const std::size_t H = pair.image.height, W = pair.image.width;
	ImagePair out{pair.id, GrayImage(H, W), BinaryMap(H, W)};
	for (std::size_t r = 0; r < H; ++r) {
		const std::size_t sr = flips.vertical ? H - 1 - r : r;
		for (std::size_t c = 0; c < W; ++c) {
			const std::size_t sc = flips.horizontal ? W - 1 - c : c;
			out.image.at(r, c) = pair.image.at(sr, sc);
			out.truth.at(r, c) = pair.truth.at(sr, sc);
		}
	}
	return out;
}

ImagePair augment(const ImagePair& pair, Rng& rng)
{
	return apply_flips(pair, draw_flips(rng));
}

DatasetManifest load_manifest(const fs::path& path, const std::optional<fs::path>& root)
{
	std::ifstream in(path);
	if (!in) throw DataError("cannot open manifest " + path.string());
	const fs::path base = root ? *root : path.parent_path();
	DatasetManifest manifest{path.stem().string(), {}, ""};
	std::string line;
	std::size_t lineno = 0;
	while (std::getline(in, line)) {
		++lineno;
		if (!line.empty() && line.back() == '\r') line.pop_back();
		if (line.empty() || line.front() == '#') continue;
		const auto tab = line.find('\t');
		if (tab == std::string::npos) {
			throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected image<TAB>truth");
		}
		fs::path image = line.substr(0, tab), truth = line.substr(tab + 1);
		if (image.is_relative()) image = base / image;
		if (truth.is_relative()) truth = base / truth;
		manifest.entries.push_back({image, truth});
	}
	return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path)
{
	std::ofstream out(path);
	if (!out) throw DataError("cannot write manifest " + path.string());
	for (const auto& e : manifest.entries) out << e.image.string() << '\t' << e.truth.string() << '\n';
}

std::vector<ImagePair> load_dataset(const DatasetManifest& manifest)
{
	std::vector<ImagePair> out;
	out.reserve(manifest.entries.size());
	for (const auto& e : manifest.entries) out.push_back(load_pair(e.image, e.truth));
	return out;
}

std::vector<Fold> leave_one_out_folds(const std::vector<DatasetManifest>& manifests)
{
	if (manifests.size() < 2) throw std::invalid_argument("leave-one-out needs at least two datasets");
	std::vector<Fold> folds;
	for (std::size_t x = 0; x < manifests.size(); ++x) {
		Fold fold;
		fold.test_name = manifests[x].name;
		fold.test = manifests[x];
		fold.test.partition = "test";
		for (std::size_t i = 0; i < manifests.size(); ++i) {
			if (i == x) continue;
			fold.train.push_back(manifests[i]);
			fold.train.back().partition = "train";
		}
		folds.push_back(std::move(fold));
	}
	return folds;
}

std::optional<fs::path> resolve_dataset_root(const std::optional<fs::path>& flag)
{
	if (flag) return flag;
	if (const char* env = std::getenv("SAUVOLA_DATA_ROOT"); env && *env) return fs::path(env);
	return std::nullopt;
}

} // namespace sauvolanet
