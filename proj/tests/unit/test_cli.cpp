#include "doctest.h"

#include <fstream>
#include <sstream>

#include "sauvolanet/checkpoint.hpp"
#include "sauvolanet/cli.hpp"
#include "sauvolanet/data.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace sauvolanet;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
	std::ifstream in(p, std::ios::binary);
	std::ostringstream s;
	s << in.rdbuf();
	return s.str();
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

} // namespace

TEST_CASE("usage errors exit 1, help exits 0")
{
	std::string out;
	CHECK(synth::run_cli("", &out) == kExitUsage);
	CHECK(synth::run_cli("frobnicate", &out) == kExitUsage);
	CHECK(synth::run_cli("--help", &out) == kExitOk);
	CHECK(out.find("binarize") != std::string::npos);
	CHECK(synth::run_cli("binarize --classic 15 0.2 x.png", &out) == kExitUsage);
	CHECK(synth::run_cli("--precision f16 gradcheck", &out) == kExitUsage);
}

TEST_CASE("classic binarization matches the naive oracle")
{
	synth::TempDir dir("cli-classic");
	const fs::path page = synth::fixture("page.png");
	const fs::path out = dir.path() / "page_bin.png";
	CHECK(synth::run_cli("binarize --classic 15 0.2 0.5 --out " + q(out) + " " + q(page)) == kExitOk);
	const GrayImage img = load_gray(page);
	CHECK(load_truth(out) == oracle::sauvola_binarize(img, 15, 0.2, 0.5));
}

TEST_CASE("checkpoint binarization is byte-identical across runs and threads")
{
	synth::TempDir dir("cli-ckpt");
	const fs::path ckpt = dir.path() / "m.ckpt";
	save_checkpoint(SauvolaNet<float>(), ckpt);
	const std::string inputs = q(synth::fixture("page.png")) + " " + q(synth::fixture("text.png"));
	CHECK(synth::run_cli("binarize --checkpoint " + q(ckpt) + " --out " + q(dir.path() / "a") + " " + inputs) == 0);
	CHECK(synth::run_cli("--threads 2 binarize --dump-thresholds --checkpoint " + q(ckpt) + " --out " +
	                     q(dir.path() / "b") + " " + inputs) == 0);
	for (const char* name : {"page_bin.png", "text_bin.png"}) {
		const std::string a = slurp(dir.path() / "a" / name);
		CHECK_FALSE(a.empty());
		CHECK(a == slurp(dir.path() / "b" / name));
	}
	CHECK(fs::exists(dir.path() / "b" / "page_thresholds.png"));
	CHECK_FALSE(fs::exists(dir.path() / "a" / "page_thresholds.png"));
}

TEST_CASE("missing checkpoint or input fails without output")
{
	synth::TempDir dir("cli-missing");
	const fs::path out = dir.path() / "out";
	std::string msg;
	CHECK(synth::run_cli("binarize --checkpoint " + q(dir.path() / "none.ckpt") + " --out " + q(out) + " " +
	                         q(synth::fixture("page.png")),
	                     &msg) == kExitData);
	CHECK(msg.find("none.ckpt") != std::string::npos);
	CHECK_FALSE(fs::exists(out));
	CHECK(synth::run_cli("binarize --classic 15 0.2 0.5 --out " + q(out) + " " + q(dir.path() / "none.png")) ==
	      kExitData);
	CHECK_FALSE(fs::exists(out));

	std::ofstream(dir.path() / "bad.ckpt") << "garbage";
	CHECK(synth::run_cli("binarize --checkpoint " + q(dir.path() / "bad.ckpt") + " --out " + q(out) + " " +
	                     q(synth::fixture("page.png"))) == kExitData);
	CHECK(synth::run_cli("binarize --out " + q(out) + " " + q(synth::fixture("page.png"))) == kExitUsage);
}

TEST_CASE("binarize refuses to overwrite its input")
{
	synth::TempDir dir("cli-overwrite");
	const fs::path copy = dir.path() / "page.png";
	fs::copy_file(synth::fixture("page.png"), copy);
	const std::string before = slurp(copy);
	CHECK(synth::run_cli("binarize --classic 15 0.2 0.5 --out " + q(copy) + " " + q(copy)) == kExitUsage);
	CHECK(slurp(copy) == before);
}

TEST_CASE("train, eval and baseline work end to end")
{
	synth::TempDir dir("cli-train");
	const auto manifest = synth::write_corpus(
		{synth::synthetic_page(48, 48, 1, {}, "p1"), synth::synthetic_page(48, 48, 2, {}, "p2")}, dir.path(), "mini");
	const fs::path ckpt = dir.path() / "model.ckpt";
	std::string out;
	REQUIRE(synth::run_cli("--seed 3 --windows 7,15 train --manifest " + q(manifest) + " --val-manifest " +
	                           q(manifest) + " --steps 4 --batch 2 --patch 32 --validate-every 2 --out " + q(ckpt),
	                       &out) == kExitOk);
	CHECK(fs::exists(ckpt));
	const std::string log = slurp(ckpt.string() + ".log.csv");
	CHECK(log.rfind("step,loss,val_fm\n", 0) == 0);
	CHECK(std::count(log.begin(), log.end(), '\n') == 5);
	CHECK(read_checkpoint(ckpt).window_set == WindowSet{{7, 15}});

	const fs::path scores = dir.path() / "scores.csv";
	REQUIRE(synth::run_cli("eval --checkpoint " + q(ckpt) + " --manifest " + q(manifest) + " --out " + q(scores) +
	                           " --compare \"DIBCO 2011\"",
	                       &out) == kExitOk);
	CHECK(out.find("94.32") != std::string::npos);
	const std::string csv = slurp(scores);
	CHECK(csv.find("fold:mini") != std::string::npos);
	CHECK(csv.find("aggregate") != std::string::npos);

	CHECK(synth::run_cli("baseline --method otsu --manifest " + q(manifest), &out) == kExitOk);
	CHECK(out.find("p1,mini,") != std::string::npos);
	CHECK(synth::run_cli("baseline --method niblack --manifest " + q(manifest), &out) == kExitUsage);
}

TEST_CASE("perfect predictions score 100 and the aggregate is the image mean")
{
	synth::TempDir dir("cli-perfect");
	// Truth equals the classic binarization of each page.
	std::vector<ImagePair> pages;
	for (std::uint64_t s : {1, 2, 3}) {
		ImagePair p = synth::synthetic_page(64, 64, s, {}, "q" + std::to_string(s));
		// The written page is 8-bit, so binarize the quantized image.
		GrayImage quant = p.image;
		for (auto& v : quant.pixels) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
		p.truth = oracle::sauvola_binarize(quant, 15, 0.2, 0.5);
		pages.push_back(p);
	}
	const auto manifest = synth::write_corpus(pages, dir.path(), "perfect");
	std::string out;
	REQUIRE(synth::run_cli("eval --classic 15 0.2 0.5 --manifest " + q(manifest), &out) == kExitOk);
	INFO(out);
	CHECK(out.find("q1,perfect,100.000000,inf,0.000000") != std::string::npos);
	CHECK(out.find("aggregate,,100.000000,inf,0.000000,,3 infinite psnr excluded") != std::string::npos);
}

TEST_CASE("dimension mismatches are reported per image and the run continues")
{
	synth::TempDir dir("cli-mismatch");
	const auto manifest = synth::write_corpus({synth::synthetic_page(40, 40, 1, {}, "ok")}, dir.path(), "mix");
	save_binary(BinaryMap(10, 10), dir.path() / "mix" / "small_gt.png");
	save_gray(GrayImage(20, 20, 0.5), dir.path() / "mix" / "small.png");
	std::ofstream(manifest, std::ios::app) << "small.png\tsmall_gt.png\n";
	std::string out;
	CHECK(synth::run_cli("eval --classic 15 0.2 0.5 --manifest " + q(manifest), &out) == kExitOk);
	CHECK(out.find("ok,mix,") != std::string::npos);
	CHECK(out.find("warning: small") != std::string::npos);
}

TEST_CASE("empty manifest is a data error")
{
	synth::TempDir dir("cli-empty");
	std::ofstream(dir.path() / "empty.tsv") << "# nothing\n";
	CHECK(synth::run_cli("train --manifest " + q(dir.path() / "empty.tsv") + " --out " + q(dir.path() / "m.ckpt")) ==
	      kExitData);
	CHECK_FALSE(fs::exists(dir.path() / "m.ckpt"));
}

TEST_CASE("config file supplies defaults that flags override")
{
	synth::TempDir dir("cli-config");
	const auto manifest = synth::write_corpus({synth::synthetic_page(40, 40, 1, {}, "c1")}, dir.path(), "cfg");
	std::ofstream(dir.path() / "run.ini") << "seed=9\nwindows=7\n[train]\nsteps=3\nbatch=2\npatch=32\n";
	const fs::path a = dir.path() / "a.ckpt", b = dir.path() / "b.ckpt";
	REQUIRE(synth::run_cli("--config " + q(dir.path() / "run.ini") + " train --manifest " + q(manifest) + " --out " +
	                       q(a)) == kExitOk);
	REQUIRE(synth::run_cli("--config " + q(dir.path() / "run.ini") + " train --steps 2 --manifest " + q(manifest) +
	                       " --out " + q(b)) == kExitOk);
	const ModelCheckpoint ca = read_checkpoint(a), cb = read_checkpoint(b);
	CHECK(ca.metadata.step_count == 3);
	CHECK(ca.metadata.seed == 9);
	CHECK(ca.window_set == WindowSet{{7}});
	CHECK(cb.metadata.step_count == 2);
}

TEST_CASE("gradcheck exit codes")
{
	std::string out;
	CHECK(synth::run_cli("gradcheck", &out) == kExitOk);
	CHECK(out.find("pwa.norm4.shift") != std::string::npos);
	CHECK(synth::run_cli("gradcheck --inject-fault sauvola", &out) == kExitNumeric);
	CHECK(out.find("FAIL") != std::string::npos);
}
