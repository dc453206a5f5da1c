#include "sauvolanet/sauvola.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <string>

namespace sauvolanet {

namespace {

std::atomic<std::uint64_t> g_r_clamps{0};

double effective_r(double r)
{
	if (r < kRFloor) {
		g_r_clamps.fetch_add(1, std::memory_order_relaxed);
		return kRFloor;
	}
	return r;
}

inline double sauvola(double mean, double sd, double k, double r)
{
	return mean * (1.0 + k * (sd / r - 1.0));
}

int otsu_bin(double v)
{
	return std::clamp(int(std::lround(v * 255.0)), 0, 255);
}

} // namespace

std::uint64_t r_clamp_count() { return g_r_clamps.load(); }
void reset_r_clamp_count() { g_r_clamps.store(0); }

void WindowSet::validate() const
{
	if (windows.empty()) throw std::invalid_argument("window set must not be empty");
	for (std::size_t i = 0; i < windows.size(); ++i) {
		validate_window(windows[i]);
		if (i > 0 && windows[i] <= windows[i - 1]) {
			throw std::invalid_argument("window set must be strictly increasing");
		}
	}
}

ThresholdMap sauvola_threshold(const IntegralPair& integral, const SauvolaParams& params)
{
	const MeanStdMaps stats = local_mean_std(integral, params.window);
	const double r = effective_r(params.r);
	ThresholdMap out(integral.height, integral.width);
	for (std::size_t p = 0; p < out.values.size(); ++p) out.values[p] = sauvola(stats.mean[p], stats.std[p], params.k, r);
	return out;
}

ThresholdMap sauvola_threshold(const GrayImage& image, const SauvolaParams& params)
{
	return sauvola_threshold(build_integral(image), params);
}

BinaryMap threshold_apply(const GrayImage& image, const ThresholdMap& thresholds)
{
	require_same_extent(image, thresholds, "threshold_apply");
	BinaryMap out(image.height, image.width);
	for (std::size_t p = 0; p < image.size(); ++p)
		out.labels[p] = image.pixels[p] >= thresholds.values[p] ? kBackground : kInk;
	return out;
}

BinaryMap threshold_apply(const GrayImage& image, double threshold)
{
	BinaryMap out(image.height, image.width);
	for (std::size_t p = 0; p < image.size(); ++p) out.labels[p] = image.pixels[p] >= threshold ? kBackground : kInk;
	return out;
}

ThresholdStack multi_window_thresholds(const GrayImage& image, const WindowSet& window_set,
                                       std::span<const SauvolaParams> params)
{
	window_set.validate();
	if (params.size() != window_set.size()) {
		throw std::invalid_argument("multi_window_thresholds: " + std::to_string(params.size()) +
		                            " parameter sets for " + std::to_string(window_set.size()) + " windows");
	}
	const IntegralPair integral = build_integral(image);
	const std::size_t N = window_set.size();
	ThresholdStack out{image.height, image.width, N, std::vector<double>(image.size() * N)};
	for (std::size_t n = 0; n < N; ++n) {
		if (params[n].window != window_set.windows[n]) {
			throw std::invalid_argument("multi_window_thresholds: parameter window " +
			                            std::to_string(params[n].window) + " does not match window set entry " +
			                            std::to_string(window_set.windows[n]));
		}
		const ThresholdMap t = sauvola_threshold(integral, params[n]);
		for (std::size_t p = 0; p < image.size(); ++p) out.values[p * N + n] = t.values[p];
	}
	return out;
}

OtsuResult otsu_threshold(const GrayImage& image)
{
	if (image.empty()) throw std::invalid_argument("otsu_threshold: empty image");
	std::array<double, 256> hist{};
	for (double v : image.pixels) hist[otsu_bin(v)] += 1.0;

	const double total = double(image.size());
	double total_moment = 0.0;
	for (int i = 0; i < 256; ++i) total_moment += i * hist[i];

	double best = -1.0;
	int best_bin = -1;
	double weight0 = 0.0, moment0 = 0.0;
	for (int t = 0; t < 255; ++t) {
		weight0 += hist[t];
		moment0 += t * hist[t];
		const double weight1 = total - weight0;
		if (weight0 == 0.0 || weight1 == 0.0) continue;
		const double mean0 = moment0 / weight0;
		const double mean1 = (total_moment - moment0) / weight1;
		const double between = weight0 * weight1 * (mean0 - mean1) * (mean0 - mean1);
		if (between > best) { // strict: ties keep the lower bin
			best = between;
			best_bin = t;
		}
	}
	if (best_bin < 0) return {image.pixels.front(), true};
	return {(best_bin + 0.5) / 255.0, false};
}

template <typename Real>
Tensor<Real> sauvola_stack(const Tensor<Real>& stats, const Tensor<Real>& k, const Tensor<Real>& r)
{
	if (stats.rank() != 4 || stats.dim(3) != 2) {
		throw ShapeError("sauvola_stack: stats must be HxWxNx2, got " + shape_string(stats.shape()));
	}
	const std::size_t H = stats.dim(0), W = stats.dim(1), N = stats.dim(2);
	if (k.shape() != Shape{N} || r.shape() != Shape{N}) {
		throw ShapeError("sauvola_stack: k and r must have shape [" + std::to_string(N) + "], got " +
		                 shape_string(k.shape()) + " and " + shape_string(r.shape()));
	}
	std::vector<double> r_eff(N);
	std::vector<bool> clamped(N);
	for (std::size_t n = 0; n < N; ++n) {
		r_eff[n] = effective_r(r.data()[n]);
		clamped[n] = r_eff[n] != double(r.data()[n]);
	}

	const auto s = stats.data();
	const auto kv = k.data();
	std::vector<Real> out(H * W * N);
	for (std::size_t p = 0; p < H * W; ++p)
		for (std::size_t n = 0; n < N; ++n)
			out[p * N + n] = Real(sauvola(s[(p * N + n) * 2], s[(p * N + n) * 2 + 1], kv[n], r_eff[n]));

	auto backward = [H, W, N, r_eff = std::move(r_eff), clamped = std::move(clamped)](detail::Node<Real>& self) {
		auto& st = *self.parents[0];
		auto& kp = *self.parents[1];
		auto& rp = *self.parents[2];
		std::vector<double> dk(N, 0.0), dr(N, 0.0);
		for (std::size_t p = 0; p < H * W; ++p) {
			for (std::size_t n = 0; n < N; ++n) {
				const double g = self.grad[p * N + n];
				const double mean = st.data[(p * N + n) * 2];
				const double sd = st.data[(p * N + n) * 2 + 1];
				const double kk = kp.data[n], rr = r_eff[n];
				dk[n] += g * mean * (sd / rr - 1.0);
				dr[n] += g * (-mean * kk * sd / (rr * rr));
				if (st.requires_grad) {
					auto ds = st.grad_buffer();
					ds[(p * N + n) * 2] += Real(g * (1.0 + kk * (sd / rr - 1.0)));
					ds[(p * N + n) * 2 + 1] += Real(g * mean * kk / rr);
				}
			}
		}
		if (kp.requires_grad) {
			auto d = kp.grad_buffer();
			for (std::size_t n = 0; n < N; ++n) d[n] += Real(dk[n]);
		}
		if (rp.requires_grad) {
			auto d = rp.grad_buffer();
			for (std::size_t n = 0; n < N; ++n)
				if (!clamped[n]) d[n] += Real(dr[n]);
		}
	};

	return Tensor<Real>::from_op({H, W, N}, std::move(out), "sauvola", {stats, k, r}, std::move(backward));
}

template Tensor<float> sauvola_stack(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> sauvola_stack(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);

} // namespace sauvolanet
