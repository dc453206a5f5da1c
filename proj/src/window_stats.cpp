#include "sauvolanet/window_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sauvolanet {

namespace {

constexpr double kStdGradGuard = 1e-12;
// Variances this small relative to E[x^2] are cancellation noise.
constexpr double kVarianceNoise = 64.0 * std::numeric_limits<double>::epsilon();

std::vector<double> integral_of(std::span<const double> values, std::size_t height, std::size_t width)
{
	const std::size_t stride = width + 1;
	std::vector<double> table((height + 1) * stride, 0.0);
	for (std::size_t i = 0; i < height; ++i) {
		double row = 0.0;
		for (std::size_t j = 0; j < width; ++j) {
			row += values[i * width + j];
			table[(i + 1) * stride + j + 1] = table[i * stride + j + 1] + row;
		}
	}
	return table;
}

// Clipped window bounds [r0, r1) x [c0, c1) around (i, j).
struct Box {
	std::size_t r0, r1, c0, c1;
	double count() const { return double((r1 - r0) * (c1 - c0)); }
	double over(const std::vector<double>& table, std::size_t stride) const
	{
		return table[r1 * stride + c1] - table[r0 * stride + c1] - table[r1 * stride + c0] + table[r0 * stride + c0];
	}
};

Box box_at(std::size_t i, std::size_t j, std::size_t height, std::size_t width, std::size_t half)
{
	return {i > half ? i - half : 0, std::min(height, i + half + 1), j > half ? j - half : 0,
	        std::min(width, j + half + 1)};
}

} // namespace

void validate_window(int window)
{
	if (window < 1 || window % 2 == 0) {
		throw std::invalid_argument("window size must be odd and positive, got " + std::to_string(window));
	}
}

IntegralPair build_integral(std::span<const double> pixels, std::size_t height, std::size_t width)
{
	if (height == 0 || width == 0) throw std::invalid_argument("build_integral: empty image");
	if (pixels.size() != height * width) throw std::invalid_argument("build_integral: pixel count mismatch");
	std::vector<double> squares(pixels.size());
	std::transform(pixels.begin(), pixels.end(), squares.begin(), [](double v) { return v * v; });
	return {height, width, integral_of(pixels, height, width), integral_of(squares, height, width)};
}

IntegralPair build_integral(const GrayImage& image)
{
	return build_integral(image.pixels, image.height, image.width);
}

MeanStdMaps local_mean_std(const IntegralPair& integral, int window)
{
	validate_window(window);
	const std::size_t H = integral.height, W = integral.width, half = std::size_t(window / 2);
	MeanStdMaps out{H, W, std::vector<double>(H * W), std::vector<double>(H * W)};
	for (std::size_t i = 0; i < H; ++i) {
		for (std::size_t j = 0; j < W; ++j) {
			const Box b = box_at(i, j, H, W, half);
			const double n = b.count();
			const double mean = b.over(integral.sum_table, integral.stride()) / n;
			const double sq = b.over(integral.sumsq_table, integral.stride()) / n;
			const double var = sq - mean * mean;
			out.mean[i * W + j] = mean;
			out.std[i * W + j] = var > kVarianceNoise * sq ? std::sqrt(var) : 0.0;
		}
	}
	return out;
}

template <typename Real>
Tensor<Real> local_stats_stack(const Tensor<Real>& image, std::span<const int> windows)
{
	const bool shape_ok = (image.rank() == 2) || (image.rank() == 3 && image.dim(2) == 1);
	if (!shape_ok) throw ShapeError("local_stats_stack: expected HxW or HxWx1 image, got " + shape_string(image.shape()));
	if (windows.empty()) throw std::invalid_argument("local_stats_stack: empty window list");
	for (int w : windows) validate_window(w);

	const std::size_t H = image.dim(0), W = image.dim(1), N = windows.size();
	std::vector<double> pixels(image.data().begin(), image.data().end());
	const IntegralPair integral = build_integral(pixels, H, W);

	std::vector<Real> out(H * W * N * 2);
	for (std::size_t n = 0; n < N; ++n) {
		const MeanStdMaps maps = local_mean_std(integral, windows[n]);
		for (std::size_t p = 0; p < H * W; ++p) {
			out[(p * N + n) * 2] = Real(maps.mean[p]);
			out[(p * N + n) * 2 + 1] = Real(maps.std[p]);
		}
	}

	std::vector<int> wins(windows.begin(), windows.end());
	auto backward = [H, W, N, wins = std::move(wins)](detail::Node<Real>& self) {
		auto& img = *self.parents[0];
		auto dx = img.grad_buffer();
		std::vector<double> a(H * W), b(H * W), c(H * W);
		for (std::size_t n = 0; n < N; ++n) {
			const std::size_t half = std::size_t(wins[n] / 2);
			for (std::size_t i = 0; i < H; ++i) {
				for (std::size_t j = 0; j < W; ++j) {
					const std::size_t p = i * W + j;
					const double count = box_at(i, j, H, W, half).count();
					const double mean = self.data[(p * N + n) * 2];
					const double sd = self.data[(p * N + n) * 2 + 1];
					const double g_mean = self.grad[(p * N + n) * 2];
					const double g_std = self.grad[(p * N + n) * 2 + 1];
					const double dstd_dvar = sd > 0.0 ? 0.5 / std::sqrt(sd * sd + kStdGradGuard) : 0.0;
					a[p] = g_mean / count;
					b[p] = g_std * dstd_dvar / count;
					c[p] = b[p] * mean;
				}
			}
			// Clipped windows are symmetric (q in win(p) iff p in win(q)), so the
			// adjoint of a window average is again a windowed sum.
			const auto ta = integral_of(a, H, W), tb = integral_of(b, H, W), tc = integral_of(c, H, W);
			for (std::size_t i = 0; i < H; ++i) {
				for (std::size_t j = 0; j < W; ++j) {
					const std::size_t p = i * W + j;
					const Box box = box_at(i, j, H, W, half);
					const double x = img.data[p];
					dx[p] += Real(box.over(ta, W + 1) + 2.0 * x * box.over(tb, W + 1) - 2.0 * box.over(tc, W + 1));
				}
			}
		}
	};

	return Tensor<Real>::from_op({H, W, N, 2}, std::move(out), "local_stats", {image}, std::move(backward));
}

template Tensor<float> local_stats_stack(const Tensor<float>&, std::span<const int>);
template Tensor<double> local_stats_stack(const Tensor<double>&, std::span<const int>);

} // namespace sauvolanet
