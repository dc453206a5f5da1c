#include "doctest.h"

#include <sstream>

#include "sauvolanet/baselines.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace sauvolanet;

TEST_CASE("baseline names round trip")
{
	for (auto b : {Baseline::otsu, Baseline::sauvola_opencv, Baseline::sauvola_scikit, Baseline::sauvola_pythreshold})
		CHECK(parse_baseline(baseline_name(b)) == b);
	CHECK_THROWS_AS(parse_baseline("niblack"), std::invalid_argument);
}

TEST_CASE("fixed Sauvola baselines use the library configurations")
{
	std::mt19937_64 rng(1);
	const GrayImage img = synth::random_image(30, 30, rng);
	CHECK(run_baseline_on(Baseline::sauvola_scikit, img) == oracle::sauvola_binarize(img, 15, 0.2, 0.5));
	CHECK(run_baseline_on(Baseline::sauvola_opencv, img) == oracle::sauvola_binarize(img, 11, 0.5, 0.5));
	CHECK(run_baseline_on(Baseline::sauvola_pythreshold, img) == oracle::sauvola_binarize(img, 15, 0.35, 0.5));
}

TEST_CASE("otsu is near perfect on a clean bimodal page")
{
	synth::PageStyle clean;
	clean.texture = 0.0;
	clean.illumination = 0.0;
	clean.noise = 0.01;
	const ImagePair page = synth::synthetic_page(128, 128, 3, clean);
	CHECK(f_measure(run_baseline_on(Baseline::otsu, page.image), page.truth) >= 99.0);
}

TEST_CASE("run_baseline scores every manifest as a fold and records unreadable pairs")
{
	synth::TempDir dir("baseline");
	std::vector<ImagePair> a{synth::synthetic_page(64, 64, 1, {}, "a1"), synth::synthetic_page(64, 64, 2, {}, "a2")};
	std::vector<ImagePair> b{synth::synthetic_page(64, 64, 3, {}, "b1")};
	auto ma = load_manifest(synth::write_corpus(a, dir.path(), "setA"));
	auto mb = load_manifest(synth::write_corpus(b, dir.path(), "setB"));
	mb.entries.push_back({dir.path() / "nope.png", dir.path() / "nope_gt.png"});

	const ScoreReport report = run_baseline(Baseline::otsu, {ma, mb});
	REQUIRE(report.folds.size() == 2);
	CHECK(report.folds[0].first == "setA");
	CHECK(report.folds[0].second.images == 2);
	CHECK(report.folds[1].second.images == 1);
	CHECK(report.images.size() == 4);
	CHECK(report.images.back().error.has_value());
	CHECK(report.aggregate.fm == doctest::Approx((report.folds[0].second.fm + report.folds[1].second.fm) / 2));
}

TEST_CASE("comparison table lists the published rows and ours")
{
	AggregateScore ours;
	ours.fm = 90.5;
	ours.psnr = 18.25;
	ours.drd = 3.0;
	std::ostringstream out;
	write_comparison_table(out, "DIBCO 2011", "this build", ours);
	const std::string text = out.str();
	CHECK(text.find("94.32") != std::string::npos);
	CHECK(text.find("Otsu") != std::string::npos);
	CHECK(text.find("this build") != std::string::npos);
	CHECK(text.find("90.50") != std::string::npos);
	CHECK(text.find("97.83") == std::string::npos);
	std::size_t rows = 0;
	for (const auto& r : reference_scores()) rows += r.dataset == "H-DIBCO 2014";
	CHECK(rows == 11);
}
