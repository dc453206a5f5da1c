#pragma once

#include <span>
#include <vector>

#include "sauvolanet/image.hpp"
#include "sauvolanet/tensor.hpp"

namespace sauvolanet {

// Zero-bordered summed-area tables of pixel values and squared values,
// (H+1) x (W+1), accumulated in double regardless of the image precision.
struct IntegralPair {
	std::size_t height = 0;
	std::size_t width = 0;
	std::vector<double> sum_table;
	std::vector<double> sumsq_table;

	std::size_t stride() const { return width + 1; }
	double sum_at(std::size_t i, std::size_t j) const { return sum_table[i * stride() + j]; }
	double sumsq_at(std::size_t i, std::size_t j) const { return sumsq_table[i * stride() + j]; }
};

IntegralPair build_integral(const GrayImage& image);
IntegralPair build_integral(std::span<const double> pixels, std::size_t height, std::size_t width);

struct MeanStdMaps {
	std::size_t height = 0;
	std::size_t width = 0;
	std::vector<double> mean;
	std::vector<double> std;
};

// Mean and standard deviation over the odd window centred on each pixel.
// Windows are clipped to the image and normalized by the in-bounds count.
MeanStdMaps local_mean_std(const IntegralPair& integral, int window);

// Differentiable variant over an HxW or HxWx1 image tensor.
// Returns [H, W, N, 2] holding (mean, std) per window; one integral pair is
// shared across the windows. The std derivative uses 1 / (2 sqrt(var + 1e-12))
// and is zero where the clamped variance is zero.
template <typename Real>
Tensor<Real> local_stats_stack(const Tensor<Real>& image, std::span<const int> windows);

void validate_window(int window);

} // namespace sauvolanet
