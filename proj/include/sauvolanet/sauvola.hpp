#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sauvolanet/image.hpp"
#include "sauvolanet/tensor.hpp"
#include "sauvolanet/window_stats.hpp"

namespace sauvolanet {

// Smallest admissible dynamic-range normalizer r.
inline constexpr double kRFloor = 1e-3;

struct SauvolaParams {
	int window = 15;
	double k = 0.2;
	double r = 0.5;
};

// Fixed configurations shipped by common libraries.
inline constexpr SauvolaParams kOpenCvSauvola{11, 0.5, 0.5};
inline constexpr SauvolaParams kScikitSauvola{15, 0.2, 0.5};
inline constexpr SauvolaParams kPythresholdSauvola{15, 0.35, 0.5};

// Strictly increasing odd window sizes.
struct WindowSet {
	std::vector<int> windows;

	static WindowSet defaults() { return {{7, 15, 23, 31, 39, 47, 55, 63}}; }
	std::size_t size() const { return windows.size(); }
	void validate() const;
	bool operator==(const WindowSet&) const = default;
};

ThresholdMap sauvola_threshold(const IntegralPair& integral, const SauvolaParams& params);
ThresholdMap sauvola_threshold(const GrayImage& image, const SauvolaParams& params);

// +1 where image >= threshold, -1 elsewhere.
BinaryMap threshold_apply(const GrayImage& image, const ThresholdMap& thresholds);
BinaryMap threshold_apply(const GrayImage& image, double threshold);

ThresholdStack multi_window_thresholds(const GrayImage& image, const WindowSet& window_set,
                                       std::span<const SauvolaParams> params);

struct OtsuResult {
	double threshold = 0.0;
	bool degenerate = false;
};

// 256-bin Otsu. The returned threshold sits halfway between the last bin of
// the dark class and the next bin, so threshold_apply splits exactly there.
OtsuResult otsu_threshold(const GrayImage& image);

// Number of times an r below kRFloor was clamped during threshold evaluation.
std::uint64_t r_clamp_count();
void reset_r_clamp_count();

// Differentiable multi-window threshold stack.
// stats: [H, W, N, 2] from local_stats_stack; k, r: [N]. Returns [H, W, N].
template <typename Real>
Tensor<Real> sauvola_stack(const Tensor<Real>& stats, const Tensor<Real>& k, const Tensor<Real>& r);

} // namespace sauvolanet
