#include "doctest.h"

#include "sauvolanet/ops.hpp"
#include "sauvolanet/optim.hpp"

using namespace sauvolanet;
using T = Tensor<double>;

TEST_CASE("zero gradient leaves parameters unchanged")
{
	ParamStore<double> ps;
	ps.add("w", T({2}, {0.3, -0.4}));
	ops::sum(ops::scale(ps.at("w"), 0.0)).backward();
	AdamState<double> st;
	adam_step(ps, st);
	CHECK(ps.at("w").data()[0] == 0.3);
	CHECK(ps.at("w").data()[1] == -0.4);
	CHECK(st.step_count == 1);
}

TEST_CASE("first step moves by about the learning rate")
{
	ParamStore<double> ps;
	ps.add("w", T::scalar(1.0));
	ops::sum(ps.at("w")).backward();
	AdamState<double> st;
	adam_step(ps, st);
	// m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
	CHECK(ps.at("w").item() == doctest::Approx(1.0 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
	CHECK_FALSE(ps.at("w").has_grad());
	REQUIRE(st.first_moment.size() == 1);
	CHECK(st.first_moment[0].size() == 1);
}

TEST_CASE("constant gradient gives a monotone decrease")
{
	ParamStore<double> ps;
	ps.add("w", T::scalar(0.0));
	AdamState<double> st;
	double prev = 0.0;
	for (int i = 0; i < 3; ++i) {
		ops::sum(ps.at("w")).backward();
		adam_step(ps, st);
		CHECK(ps.at("w").item() < prev);
		prev = ps.at("w").item();
		CHECK(st.step_count == std::uint64_t(i + 1));
	}
}

TEST_CASE("missing gradient is rejected")
{
	ParamStore<double> ps;
	ps.add("a", T::scalar(1.0));
	ps.add("b", T::scalar(1.0));
	ops::sum(ps.at("a")).backward();
	AdamState<double> st;
	CHECK_THROWS_AS(adam_step(ps, st), MissingGradientError);
}

TEST_CASE("frozen parameters are skipped and bounds are enforced")
{
	ParamStore<double> ps;
	ps.add("frozen", T::scalar(1.0));
	ps.add("r", T::scalar(0.0015), 1e-3);
	ps.set_trainable("frozen", false);
	CHECK(ps.trainable_count() == 1);
	ops::sum(ops::scale(ps.at("r"), 1.0)).backward();
	AdamState<double> st;
	st.config.learning_rate = 0.01;
	adam_step(ps, st);
	CHECK(ps.at("frozen").item() == 1.0);
	CHECK(ps.at("r").item() == 1e-3);
}

TEST_CASE("duplicate parameter names are rejected")
{
	ParamStore<double> ps;
	ps.add("w", T::scalar(1.0));
	CHECK_THROWS(ps.add("w", T::scalar(2.0)));
	CHECK_THROWS(ps.at("missing"));
}
