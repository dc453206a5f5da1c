#include "doctest.h"

#include <cmath>
#include <random>

#include "sauvolanet/ops.hpp"
#include "support/oracles.hpp"

using namespace sauvolanet;
using T = Tensor<double>;

namespace {

T random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad)
{
	std::uniform_real_distribution<double> u(-1.0, 1.0);
	std::vector<double> v(shape_size(shape));
	for (auto& x : v) x = u(rng);
	return T(std::move(shape), std::move(v), requires_grad);
}

std::vector<double> values(const T& t) { return {t.data().begin(), t.data().end()}; }

// Max relative error of d(f)/d(leaf) against central differences.
double fd_error(const std::function<T()>& f, T& leaf)
{
	leaf.zero_grad();
	f().backward();
	const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
	double worst = 0.0;
	for (std::size_t i = 0; i < leaf.size(); ++i) {
		const double numeric = oracle::central_difference(
			[&] {
				NoGradGuard g;
				return f().item();
			},
			leaf.data_mut()[i], 1e-6);
		worst = std::max(worst, std::abs(analytic[i] - numeric) /
		                            std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6}));
	}
	return worst;
}

} // namespace

TEST_CASE("conv2d degenerate 1x1")
{
	const T y = ops::conv2d(T({1, 1, 1}, {3.0}), T({1, 1, 1, 1}, {2.0}), T({1}, {0.5}), 1);
	CHECK(y.item() == 6.5);
}

TEST_CASE("conv2d all-ones 3x3")
{
	const T y = ops::conv2d(T::full({3, 3, 1}, 1.0), T::full({3, 3, 1, 1}, 1.0), T::zeros({1}), 1);
	CHECK(y.data()[4] == 9.0);
	CHECK(y.data()[0] == 4.0);
	CHECK(y.data()[2] == 4.0);
	CHECK(y.data()[1] == 6.0);
}

TEST_CASE("conv2d identity kernel")
{
	std::mt19937_64 rng(1);
	const T x = random_tensor({5, 6, 2}, rng, false);
	std::vector<double> w(3 * 3 * 2 * 2, 0.0);
	for (int c = 0; c < 2; ++c) w[((1 * 3 + 1) * 2 + c) * 2 + c] = 1.0;
	const T y = ops::conv2d(x, T({3, 3, 2, 2}, w), T::zeros({2}), 2);
	CHECK(values(y) == values(x));
}

TEST_CASE("conv2d matches direct summation for several geometries")
{
	std::mt19937_64 rng(2);
	for (auto [H, W, Cin, Cout, k, d] : std::vector<std::array<int, 6>>{
		     {7, 5, 1, 8, 3, 1}, {9, 9, 8, 16, 3, 2}, {12, 10, 32, 16, 3, 2}, {6, 6, 16, 8, 1, 1}, {4, 5, 3, 2, 5, 1}}) {
		const T x = random_tensor({std::size_t(H), std::size_t(W), std::size_t(Cin)}, rng, false);
		const T w = random_tensor({std::size_t(k), std::size_t(k), std::size_t(Cin), std::size_t(Cout)}, rng, false);
		const T b = random_tensor({std::size_t(Cout)}, rng, false);
		const auto expect = oracle::conv2d(values(x), H, W, Cin, values(w), k, Cout, values(b), d);
		const auto got = values(ops::conv2d(x, w, b, d));
		double worst = 0.0;
		for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - expect[i]));
		CHECK(worst < 1e-12);
	}
}

TEST_CASE("conv2d rejects mismatched channels with a descriptive message")
{
	const T x = T::zeros({4, 4, 3});
	const T w = T::zeros({3, 3, 2, 4});
	try {
		ops::conv2d(x, w, T::zeros({4}), 1);
		FAIL("expected ShapeError");
	} catch (const ShapeError& e) {
		CHECK(std::string(e.what()).find("3 channels") != std::string::npos);
	}
	CHECK_THROWS_AS(ops::conv2d(T::zeros({4, 4, 2}), w, T::zeros({3}), 1), ShapeError);
	CHECK_THROWS_AS(ops::conv2d(T::zeros({4, 4, 2}), w, T::zeros({4}), 0), ShapeError);
}

TEST_CASE("conv2d gradients match finite differences")
{
	std::mt19937_64 rng(3);
	for (int dilation : {1, 2}) {
		T x = random_tensor({7, 6, 32}, rng, true);
		T w = random_tensor({3, 3, 32, 16}, rng, true);
		T b = random_tensor({16}, rng, true);
		const T probe = random_tensor({7, 6, 16}, rng, false);
		auto f = [&] { return ops::sum(ops::mul(ops::conv2d(x, w, b, dilation), probe)); };
		CHECK(fd_error(f, x) < 1e-4);
		CHECK(fd_error(f, w) < 1e-4);
		CHECK(fd_error(f, b) < 1e-4);
	}
}

TEST_CASE("instance_norm examples")
{
	const T c = ops::instance_norm(T::full({2, 2, 1}, 0.7), T({1}, {1.0}), T({1}, {0.0}));
	for (double v : c.data()) CHECK(v == 0.0);

	const T two = ops::instance_norm(T({2, 1}, {0.0, 2.0}), T({1}, {1.0}), T({1}, {0.0}));
	const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
	CHECK(two.data()[0] == doctest::Approx(-expect).epsilon(1e-12));
	CHECK(two.data()[1] == doctest::Approx(expect).epsilon(1e-12));

	std::mt19937_64 rng(4);
	const T flat = ops::instance_norm(random_tensor({3, 3, 2}, rng, false), T::zeros({2}), T::full({2}, 5.0));
	for (double v : flat.data()) CHECK(v == 5.0);
	CHECK_THROWS_AS(ops::instance_norm(T::zeros({3, 3, 2}), T::zeros({3}), T::zeros({2})), ShapeError);
}

TEST_CASE("instance_norm gradients match finite differences")
{
	std::mt19937_64 rng(5);
	T x = random_tensor({5, 4, 3}, rng, true);
	T g = random_tensor({3}, rng, true);
	T s = random_tensor({3}, rng, true);
	const T probe = random_tensor({5, 4, 3}, rng, false);
	auto f = [&] { return ops::sum(ops::mul(ops::instance_norm(x, g, s), probe)); };
	CHECK(fd_error(f, x) < 1e-4);
	CHECK(fd_error(f, g) < 1e-4);
	CHECK(fd_error(f, s) < 1e-4);
}

TEST_CASE("relu examples and gradient")
{
	CHECK(values(ops::relu(T({3}, {-1.0, 0.0, 2.0}))) == std::vector<double>{0.0, 0.0, 2.0});
	CHECK(values(ops::relu(T::full({4}, -3.0))) == std::vector<double>(4, 0.0));
	T x({2}, {-1.0, 2.0}, true);
	ops::sum(ops::relu(x)).backward();
	CHECK(x.grad()[0] == 0.0);
	CHECK(x.grad()[1] == 1.0);
	CHECK(fd_error([&] { return ops::sum(ops::relu(x)); }, x) < 1e-6);
}

TEST_CASE("softmax examples")
{
	const T eq = ops::softmax_channels(T::full({1, 1, 8}, 0.3));
	for (double v : eq.data()) CHECK(v == doctest::Approx(0.125).epsilon(1e-15));

	const T two = ops::softmax_channels(T({1, 1, 2}, {std::log(1.0), std::log(3.0)}));
	CHECK(two.data()[0] == doctest::Approx(0.25).epsilon(1e-14));
	CHECK(two.data()[1] == doctest::Approx(0.75).epsilon(1e-14));

	std::mt19937_64 rng(6);
	const T z = random_tensor({3, 3, 5}, rng, false);
	std::vector<double> shifted = values(z);
	for (std::size_t p = 0; p < 9; ++p)
		for (std::size_t n = 0; n < 5; ++n) shifted[p * 5 + n] += double(p) * 7.0;
	const auto a = values(ops::softmax_channels(z));
	const auto b = values(ops::softmax_channels(T({3, 3, 5}, shifted)));
	for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));

	const T big = ops::softmax_channels(T({1, 1, 2}, {1000.0, 0.0}));
	CHECK(std::isfinite(big.data()[1]));
	CHECK(big.data()[0] == 1.0);
}

TEST_CASE("softmax gradient matches finite differences")
{
	std::mt19937_64 rng(7);
	T z = random_tensor({4, 3, 6}, rng, true);
	const T probe = random_tensor({4, 3, 6}, rng, false);
	CHECK(fd_error([&] { return ops::sum(ops::mul(ops::softmax_channels(z), probe)); }, z) < 1e-5);
}

TEST_CASE("composite graph gradient within 1e-4")
{
	std::mt19937_64 rng(8);
	T x = random_tensor({6, 6, 1}, rng, false);
	T w0 = random_tensor({3, 3, 1, 4}, rng, true);
	T g0 = random_tensor({4}, rng, true);
	T s0 = random_tensor({4}, rng, true);
	T w1 = random_tensor({1, 1, 4, 3}, rng, true);
	T b1 = random_tensor({3}, rng, true);
	const T probe = random_tensor({6, 6, 3}, rng, false);
	auto f = [&] {
		T h = ops::relu(ops::instance_norm(ops::conv2d(x, w0, T::zeros({4}), 2), g0, s0));
		h = ops::softmax_channels(ops::conv2d(h, w1, b1, 1));
		return ops::scale(ops::sum(ops::mul(h, probe)), 0.5);
	};
	for (T* leaf : {&w0, &g0, &s0, &w1, &b1}) CHECK(fd_error(f, *leaf) < 1e-4);
}

TEST_CASE("reshape keeps data and routes gradient")
{
	T x({2, 3}, {1, 2, 3, 4, 5, 6}, true);
	const T y = ops::reshape(x, {3, 2});
	CHECK(values(y) == values(x));
	CHECK_THROWS_AS(ops::reshape(x, {4, 2}), ShapeError);
	ops::sum(ops::mul(y, y)).backward();
	CHECK(x.grad()[5] == 12.0);
}

TEST_CASE("ops produce finite values on finite inputs in single precision")
{
	std::mt19937 rng(9);
	std::uniform_real_distribution<float> u(-50.0f, 50.0f);
	std::vector<float> v(8 * 8 * 4);
	for (auto& x : v) x = u(rng);
	const Tensor<float> x({8, 8, 4}, v);
	const auto y = ops::softmax_channels(ops::relu(ops::instance_norm(x, Tensor<float>::full({4}, 1.0f),
	                                                                  Tensor<float>::zeros({4}))));
	for (float f : y.data()) CHECK(std::isfinite(f));
}
