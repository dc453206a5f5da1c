#include "doctest.h"

#include <cmath>
#include <random>

#include "sauvolanet/ops.hpp"
#include "sauvolanet/sauvola.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace sauvolanet;

TEST_CASE("constant image collapses to v(1 - k)")
{
	const GrayImage img(12, 9, 0.6);
	for (double k : {0.2, 0.5, -0.1}) {
		const ThresholdMap t = sauvola_threshold(img, {15, k, 0.5});
		for (double v : t.values) CHECK(v == doctest::Approx(0.6 * (1 - k)).epsilon(1e-9));
	}
}

TEST_CASE("direct evaluation of the threshold formula")
{
	// Alternating 0.25 / 0.75 columns: every full 3-wide window would not be
	// balanced, so use a 1x2 image with window 3, whose single window holds both.
	GrayImage img(1, 2);
	img.pixels = {0.25, 0.75};
	const ThresholdMap t = sauvola_threshold(img, {3, 0.2, 0.5});
	// mean 0.5, std 0.25 -> 0.5 * (1 + 0.2 * (0.5 - 1)) = 0.45
	CHECK(t.values[0] == doctest::Approx(0.45).epsilon(1e-12));
	CHECK(t.values[1] == doctest::Approx(0.45).epsilon(1e-12));
}

TEST_CASE("scikit configuration matches the naive oracle")
{
	std::mt19937_64 rng(1);
	for (int trial = 0; trial < 3; ++trial) {
		const GrayImage img = synth::random_image(20 + trial * 7, 31 - trial * 3, rng);
		const ThresholdMap t = sauvola_threshold(img, kScikitSauvola);
		const auto ref = oracle::sauvola_thresholds(img, 15, 0.2, 0.5);
		for (std::size_t p = 0; p < ref.size(); ++p) CHECK(std::abs(t.values[p] - ref[p]) < 1e-5);
		CHECK(threshold_apply(img, t) == oracle::sauvola_binarize(img, 15, 0.2, 0.5));
	}
}

TEST_CASE("threshold_apply is inclusive at equality")
{
	GrayImage img(1, 3);
	img.pixels = {0.6, 0.45, 0.2};
	ThresholdMap t(1, 3, 0.45);
	const BinaryMap b = threshold_apply(img, t);
	CHECK(b.labels[0] == kBackground);
	CHECK(b.labels[1] == kBackground);
	CHECK(b.labels[2] == kInk);
	for (auto v : threshold_apply(GrayImage(4, 4, 1.0), 0.99).labels) CHECK(v == kBackground);
	CHECK_THROWS_AS(threshold_apply(img, ThresholdMap(2, 3)), std::invalid_argument);
}

TEST_CASE("r below the floor is clamped and counted")
{
	reset_r_clamp_count();
	std::mt19937_64 rng(2);
	const GrayImage img = synth::random_image(8, 8, rng);
	const ThresholdMap clamped = sauvola_threshold(img, {7, 0.2, 0.0});
	const ThresholdMap floor = sauvola_threshold(img, {7, 0.2, kRFloor});
	CHECK(r_clamp_count() == 1);
	CHECK(clamped.values == floor.values);
}

TEST_CASE("multi-window stack equals independent single-window calls")
{
	std::mt19937_64 rng(3);
	const GrayImage img = synth::random_image(32, 32, rng);
	const WindowSet set = WindowSet::defaults();
	std::vector<SauvolaParams> params;
	for (std::size_t n = 0; n < set.size(); ++n) params.push_back({set.windows[n], 0.1 + 0.05 * double(n), 0.4});
	const ThresholdStack stack = multi_window_thresholds(img, set, params);
	for (std::size_t n = 0; n < set.size(); ++n) CHECK(stack.channel(n).values == sauvola_threshold(img, params[n]).values);

	const WindowSet one{{15}};
	const SauvolaParams p{15, 0.2, 0.5};
	CHECK(multi_window_thresholds(img, one, std::span(&p, 1)).channel(0).values == sauvola_threshold(img, p).values);

	const GrayImage flat(5, 5, 0.8);
	const ThresholdStack cs = multi_window_thresholds(flat, set, params);
	for (std::size_t n = 0; n < set.size(); ++n)
		for (double v : cs.channel(n).values) CHECK(v == doctest::Approx(0.8 * (1 - params[n].k)).epsilon(1e-9));

	params.pop_back();
	CHECK_THROWS_AS(multi_window_thresholds(img, set, params), std::invalid_argument);
}

TEST_CASE("window sets must be strictly increasing and odd")
{
	CHECK_NOTHROW(WindowSet::defaults().validate());
	CHECK(WindowSet::defaults().windows == std::vector<int>{7, 15, 23, 31, 39, 47, 55, 63});
	CHECK_THROWS(WindowSet{{7, 7}}.validate());
	CHECK_THROWS(WindowSet{{15, 7}}.validate());
	CHECK_THROWS(WindowSet{{8}}.validate());
	CHECK_THROWS(WindowSet{{}}.validate());
}

TEST_CASE("otsu on a bimodal image separates the modes")
{
	GrayImage img(4, 4, 0.2);
	for (std::size_t p = 8; p < 16; ++p) img.pixels[p] = 0.8;
	const OtsuResult r = otsu_threshold(img);
	CHECK_FALSE(r.degenerate);
	CHECK(r.threshold > 0.2);
	CHECK(r.threshold < 0.8);
}

TEST_CASE("otsu flags a constant image")
{
	const OtsuResult r = otsu_threshold(GrayImage(3, 3, 0.4));
	CHECK(r.degenerate);
	CHECK(r.threshold == 0.4);
}

TEST_CASE("otsu equals the exhaustive search")
{
	std::mt19937_64 rng(4);
	for (int trial = 0; trial < 10; ++trial) {
		GrayImage img = synth::random_image(17, 19, rng);
		// Quantize to 8 bits like decoded pages.
		for (auto& v : img.pixels) v = std::round(v * 255.0) / 255.0;
		const int cut = oracle::otsu_cut(img);
		CHECK(otsu_threshold(img).threshold == doctest::Approx((cut - 0.5) / 255.0).epsilon(1e-12));
	}
}

TEST_CASE("differentiable stack matches the fixed-parameter path and its gradients")
{
	std::mt19937_64 rng(5);
	const GrayImage img = synth::random_image(10, 12, rng);
	const std::vector<int> windows{3, 7, 11};
	Tensor<double> x({10, 12, 1}, img.pixels, false);
	Tensor<double> k({3}, {0.2, 0.35, -0.1}, true);
	Tensor<double> r({3}, {0.5, 0.3, 0.8}, true);
	const auto stats = local_stats_stack(x, windows);
	const auto s = sauvola_stack(stats, k, r);
	REQUIRE(s.shape() == Shape{10, 12, 3});
	for (std::size_t n = 0; n < 3; ++n) {
		const ThresholdMap ref = sauvola_threshold(img, {windows[n], k.data()[n], r.data()[n]});
		for (std::size_t p = 0; p < img.size(); ++p) CHECK(s.data()[p * 3 + n] == doctest::Approx(ref.values[p]).epsilon(1e-12));
	}

	std::vector<double> probe(s.size());
	for (auto& v : probe) v = std::uniform_real_distribution<double>(-1, 1)(rng);
	const Tensor<double> pt(s.shape(), probe);
	auto loss = [&] { return ops::sum(ops::mul(sauvola_stack(stats, k, r), pt)); };
	loss().backward();
	for (Tensor<double>* leaf : {&k, &r}) {
		const std::vector<double> analytic(leaf->grad().begin(), leaf->grad().end());
		for (std::size_t i = 0; i < 3; ++i) {
			const double numeric = oracle::central_difference(
				[&] {
					NoGradGuard g;
					return loss().item();
				},
				leaf->data_mut()[i], 1e-6);
			CHECK(analytic[i] == doctest::Approx(numeric).epsilon(1e-6));
		}
	}
}
