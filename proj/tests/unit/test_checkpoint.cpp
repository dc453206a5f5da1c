#include "doctest.h"

#include <fstream>
#include <random>

#include "sauvolanet/checkpoint.hpp"
#include "sauvolanet/ops.hpp"
#include "support/synthetic.hpp"

using namespace sauvolanet;
using Kind = CheckpointError::Kind;

namespace {

template <typename Real>
void perturb(SauvolaNet<Real>& model, std::uint64_t seed)
{
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> u(-0.3, 0.3);
	for (auto& p : model.params().entries())
		for (auto& v : p.value.data_mut()) v = Real(double(v) + u(rng));
}

Kind decode_error(const std::vector<std::uint8_t>& bytes)
{
	try {
		decode_checkpoint(bytes);
	} catch (const CheckpointError& e) {
		return e.kind();
	}
	FAIL("decode succeeded");
	return Kind::io;
}

} // namespace

TEST_CASE("save and load reproduce binarization bit-exactly")
{
	synth::TempDir dir("ckpt");
	SauvolaNet<float> model;
	perturb(model, 1);
	const auto path = dir.path() / "m.ckpt";
	save_checkpoint(model, path);
	const SauvolaNet<float> loaded = load_checkpoint<float>(path);
	std::mt19937_64 rng(2);
	const GrayImage img = synth::random_image(37, 41, rng);
	CHECK(f_sauvolanet(img, loaded) == f_sauvolanet(img, model));
	CHECK(predict_thresholds(img, loaded).values == predict_thresholds(img, model).values);
	CHECK_FALSE(std::filesystem::exists(path.string() + ".tmp"));
}

TEST_CASE("double precision values survive the round trip")
{
	SauvolaNet<double> model;
	perturb(model, 3);
	const ModelCheckpoint ckpt = make_checkpoint(model);
	CHECK(ckpt.value_bytes == 8);
	SauvolaNet<double> other;
	restore_checkpoint(decode_checkpoint(encode_checkpoint(ckpt)), other);
	for (std::size_t i = 0; i < model.params().size(); ++i) {
		const auto a = model.params().entries()[i].value.data();
		const auto b = other.params().entries()[i].value.data();
		CHECK(std::equal(a.begin(), a.end(), b.begin()));
	}
}

TEST_CASE("optimizer state and metadata round trip")
{
	SauvolaNet<double> model(WindowSet{{7, 15}});
	AdamState<double> st;
	GrayImage img(12, 12, 0.5);
	img.pixels[30] = 0.1;
	const auto x = image_tensor<double>(img);
	hinge_loss(x, g_sauvolanet(x, model), threshold_apply(img, 0.3)).backward();
	adam_step(model.params(), st);

	TrainingMetadata meta{1, 99, 1, 0.25, loss_history_digest({0.25})};
	const ModelCheckpoint back = decode_checkpoint(encode_checkpoint(make_checkpoint(model, &st, meta)));
	REQUIRE(back.optimizer.has_value());
	CHECK(back.optimizer->step_count == 1);
	CHECK(back.metadata.seed == 99);
	CHECK(back.metadata.final_loss == 0.25);
	CHECK(back.metadata.loss_digest == loss_history_digest({0.25}));
	CHECK(back.window_set == WindowSet{{7, 15}});

	SauvolaNet<double> restored(WindowSet{{7, 15}});
	AdamState<double> st2;
	restore_checkpoint(back, restored, &st2);
	CHECK(st2.step_count == 1);
	CHECK(st2.first_moment == st.first_moment);
	CHECK(st2.second_moment == st.second_moment);
}

TEST_CASE("corruption is reported distinctly")
{
	const auto bytes = encode_checkpoint(make_checkpoint(SauvolaNet<float>()));

	auto flipped = bytes;
	flipped[bytes.size() / 2] ^= 0x40;
	CHECK(decode_error(flipped) == Kind::checksum);

	auto magic = bytes;
	magic[0] = 'X';
	CHECK(decode_error(magic) == Kind::bad_magic);

	auto version = bytes;
	version[8] = 2;
	CHECK(decode_error(version) == Kind::version_mismatch);

	CHECK(decode_error(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 9)) == Kind::truncated);
	CHECK(decode_error(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 5)) == Kind::truncated);
}

TEST_CASE("mismatched window set or missing file is refused")
{
	synth::TempDir dir("ckpt2");
	const auto path = dir.path() / "m.ckpt";
	save_checkpoint(SauvolaNet<float>(), path);
	const WindowSet other{{7, 15, 23}};
	try {
		load_checkpoint<float>(path, &other);
		FAIL("expected mismatch");
	} catch (const CheckpointError& e) {
		CHECK(e.kind() == Kind::shape_mismatch);
	}
	SauvolaNet<float> small(other);
	CHECK_THROWS_AS(restore_checkpoint(read_checkpoint(path), small), CheckpointError);

	try {
		load_checkpoint<float>(dir.path() / "absent.ckpt");
		FAIL("expected io error");
	} catch (const CheckpointError& e) {
		CHECK(e.kind() == Kind::io);
	}
}

TEST_CASE("single precision checkpoints load into a double model")
{
	SauvolaNet<float> model;
	perturb(model, 4);
	SauvolaNet<double> wide;
	restore_checkpoint(make_checkpoint(model), wide);
	CHECK(double(model.k().data()[3]) == wide.k().data()[3]);
}
