#include "sauvolanet/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace sauvolanet {

namespace {

struct Confusion {
	double tp = 0, fp = 0, fn = 0;
};

Confusion confusion(const BinaryMap& pred, const BinaryMap& truth)
{
	require_same_extent(pred, truth, "metric");
	Confusion c;
	for (std::size_t p = 0; p < pred.size(); ++p) {
		const bool pi = pred.labels[p] == kInk, ti = truth.labels[p] == kInk;
		if (pi && ti) c.tp += 1;
		else if (pi) c.fp += 1;
		else if (ti) c.fn += 1;
	}
	return c;
}

double harmonic(double precision, double recall)
{
	return precision + recall > 0.0 ? 100.0 * 2.0 * precision * recall / (precision + recall) : 0.0;
}

void write_number(std::ostream& out, double v)
{
	if (std::isinf(v)) out << "inf";
	else out << std::setprecision(6) << std::fixed << v;
}

} // namespace

double f_measure(const BinaryMap& pred, const BinaryMap& truth)
{
	const Confusion c = confusion(pred, truth);
	const double precision = c.tp + c.fp > 0 ? c.tp / (c.tp + c.fp) : 0.0;
	const double recall = c.tp + c.fn > 0 ? c.tp / (c.tp + c.fn) : 0.0;
	return harmonic(precision, recall);
}

double psnr(const BinaryMap& pred, const BinaryMap& truth)
{
	require_same_extent(pred, truth, "psnr");
	std::size_t wrong = 0;
	for (std::size_t p = 0; p < pred.size(); ++p) wrong += pred.labels[p] != truth.labels[p];
	if (wrong == 0) return std::numeric_limits<double>::infinity();
	const double mse = double(wrong) / double(pred.size());
	return 10.0 * std::log10(1.0 / mse);
}

const std::array<std::array<double, 5>, 5>& drd_weights()
{
	static const auto weights = [] {
		std::array<std::array<double, 5>, 5> w{};
		double total = 0.0;
		for (int i = 0; i < 5; ++i)
			for (int j = 0; j < 5; ++j) {
				if (i == 2 && j == 2) continue;
				w[i][j] = 1.0 / std::sqrt(double((i - 2) * (i - 2) + (j - 2) * (j - 2)));
				total += w[i][j];
			}
		for (auto& row : w)
			for (auto& v : row) v /= total;
		return w;
	}();
	return weights;
}

DrdResult drd(const BinaryMap& pred, const BinaryMap& truth)
{
	require_same_extent(pred, truth, "drd");
	const auto& w = drd_weights();
	const long H = long(truth.height), W = long(truth.width);

	double distortion = 0.0;
	for (long r = 0; r < H; ++r) {
		for (long c = 0; c < W; ++c) {
			const auto b = pred.at(std::size_t(r), std::size_t(c));
			if (b == truth.at(std::size_t(r), std::size_t(c))) continue;
			for (int i = -2; i <= 2; ++i) {
				const long rr = r + i;
				if (rr < 0 || rr >= H) continue;
				for (int j = -2; j <= 2; ++j) {
					const long cc = c + j;
					if (cc < 0 || cc >= W) continue;
					if (truth.at(std::size_t(rr), std::size_t(cc)) != b) distortion += w[i + 2][j + 2];
				}
			}
		}
	}

	std::size_t nubn = 0;
	for (std::size_t r0 = 0; r0 < truth.height; r0 += 8) {
		for (std::size_t c0 = 0; c0 < truth.width; c0 += 8) {
			bool ink = false, bg = false;
			for (std::size_t r = r0; r < std::min(r0 + 8, truth.height); ++r)
				for (std::size_t c = c0; c < std::min(c0 + 8, truth.width); ++c) {
					(truth.at(r, c) == kInk ? ink : bg) = true;
				}
			nubn += ink && bg;
		}
	}
	if (nubn == 0) return {distortion, 0, true};
	return {distortion / double(nubn), nubn, false};
}

BinaryMap skeletonize(const BinaryMap& map)
{
	const long H = long(map.height), W = long(map.width);
	std::vector<std::uint8_t> img(map.size());
	for (std::size_t p = 0; p < map.size(); ++p) img[p] = map.labels[p] == kInk;
	auto at = [&](long r, long c) -> int {
		return (r < 0 || r >= H || c < 0 || c >= W) ? 0 : img[std::size_t(r * W + c)];
	};

	std::vector<std::size_t> removal;
	bool changed = true;
	while (changed) {
		changed = false;
		for (int pass = 0; pass < 2; ++pass) {
			removal.clear();
			for (long r = 0; r < H; ++r) {
				for (long c = 0; c < W; ++c) {
					if (!img[std::size_t(r * W + c)]) continue;
					// Neighbours P2..P9 clockwise from north.
					const int n[8] = {at(r - 1, c), at(r - 1, c + 1), at(r, c + 1), at(r + 1, c + 1),
					                  at(r + 1, c), at(r + 1, c - 1), at(r, c - 1), at(r - 1, c - 1)};
					int count = 0, transitions = 0;
					for (int i = 0; i < 8; ++i) {
						count += n[i];
						transitions += (n[i] == 0 && n[(i + 1) % 8] == 1);
					}
					if (count < 2 || count > 6 || transitions != 1) continue;
					const bool cond = pass == 0 ? (n[0] * n[2] * n[4] == 0 && n[2] * n[4] * n[6] == 0)
					                            : (n[0] * n[2] * n[6] == 0 && n[0] * n[4] * n[6] == 0);
					if (cond) removal.push_back(std::size_t(r * W + c));
				}
			}
			for (auto p : removal) img[p] = 0;
			changed = changed || !removal.empty();
		}
	}
	BinaryMap out(map.height, map.width);
	for (std::size_t p = 0; p < out.size(); ++p) out.labels[p] = img[p] ? kInk : kBackground;
	return out;
}

double pseudo_f_measure_approx(const BinaryMap& pred, const BinaryMap& truth)
{
	const Confusion c = confusion(pred, truth);
	const double precision = c.tp + c.fp > 0 ? c.tp / (c.tp + c.fp) : 0.0;
	const BinaryMap skeleton = skeletonize(truth);
	double skel = 0, hit = 0;
	for (std::size_t p = 0; p < skeleton.size(); ++p) {
		if (skeleton.labels[p] != kInk) continue;
		skel += 1;
		hit += pred.labels[p] == kInk;
	}
	const double recall = skel > 0 ? hit / skel : 0.0;
	return harmonic(precision, recall);
}

ImageScore score_image(const std::string& id, const BinaryMap& pred, const BinaryMap& truth, bool with_fps)
{
	ImageScore s;
	s.id = id;
	s.fm = f_measure(pred, truth);
	s.psnr = psnr(pred, truth);
	s.drd = drd(pred, truth).value;
	if (with_fps) s.fps_approx = pseudo_f_measure_approx(pred, truth);
	return s;
}

AggregateScore mean_score(const std::vector<ImageScore>& images)
{
	AggregateScore a;
	double psnr_total = 0.0, fps_total = 0.0;
	std::size_t psnr_n = 0, fps_n = 0;
	for (const auto& s : images) {
		if (s.error) continue;
		a.images += 1;
		a.fm += s.fm;
		a.drd += s.drd;
		if (std::isinf(s.psnr)) {
			a.infinite_psnr += 1;
		} else {
			psnr_total += s.psnr;
			psnr_n += 1;
		}
		if (s.fps_approx) {
			fps_total += *s.fps_approx;
			fps_n += 1;
		}
	}
	if (a.images > 0) {
		a.fm /= double(a.images);
		a.drd /= double(a.images);
	}
	a.psnr = psnr_n > 0 ? psnr_total / double(psnr_n) : std::numeric_limits<double>::infinity();
	if (fps_n > 0 && fps_n == a.images) a.fps_approx = fps_total / double(fps_n);
	return a;
}

ScoreReport aggregate_score(const std::vector<FoldScores>& folds)
{
	if (folds.empty()) throw std::invalid_argument("aggregate_score: no folds");
	ScoreReport report;
	double psnr_total = 0.0, fps_total = 0.0;
	std::size_t psnr_n = 0, fps_n = 0;
	for (const auto& fold : folds) {
		const AggregateScore m = mean_score(fold.images);
		if (m.images == 0) throw std::invalid_argument("aggregate_score: fold '" + fold.name + "' has no scored images");
		for (auto s : fold.images) {
			s.fold = fold.name;
			report.images.push_back(std::move(s));
		}
		report.folds.emplace_back(fold.name, m);
		auto& a = report.aggregate;
		a.fm += m.fm;
		a.drd += m.drd;
		a.images += m.images;
		a.infinite_psnr += m.infinite_psnr;
		if (!std::isinf(m.psnr)) {
			psnr_total += m.psnr;
			psnr_n += 1;
		}
		if (m.fps_approx) {
			fps_total += *m.fps_approx;
			fps_n += 1;
		}
	}
	auto& a = report.aggregate;
	a.fm /= double(folds.size());
	a.drd /= double(folds.size());
	a.psnr = psnr_n > 0 ? psnr_total / double(psnr_n) : std::numeric_limits<double>::infinity();
	if (fps_n == folds.size()) a.fps_approx = fps_total / double(fps_n);
	return report;
}

void write_score_csv(const ScoreReport& report, std::ostream& out)
{
	out << "id,fold,fm,psnr,drd,fps_approx,note\n";
	auto row = [&](const std::string& id, const std::string& fold, double fm, double ps, double d,
	               const std::optional<double>& fps, const std::string& note) {
		out << id << ',' << fold << ',';
		write_number(out, fm);
		out << ',';
		write_number(out, ps);
		out << ',';
		write_number(out, d);
		out << ',';
		if (fps) write_number(out, *fps);
		out << ',' << note << '\n';
	};
	for (const auto& s : report.images) {
		if (s.error) {
			out << s.id << ',' << s.fold << ",,,,," << '"' << *s.error << '"' << '\n';
			continue;
		}
		row(s.id, s.fold, s.fm, s.psnr, s.drd, s.fps_approx, "");
	}
	for (const auto& [name, m] : report.folds) {
		row("fold:" + name, name, m.fm, m.psnr, m.drd, m.fps_approx,
		    m.infinite_psnr ? std::to_string(m.infinite_psnr) + " infinite psnr excluded" : "");
	}
	const auto& a = report.aggregate;
	row("aggregate", "", a.fm, a.psnr, a.drd, a.fps_approx,
	    a.infinite_psnr ? std::to_string(a.infinite_psnr) + " infinite psnr excluded" : "");
}

} // namespace sauvolanet
