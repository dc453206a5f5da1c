#include "sauvolanet/baselines.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "sauvolanet/sauvola.hpp"

namespace sauvolanet {

Baseline parse_baseline(std::string_view name)
{
	if (name == "otsu") return Baseline::otsu;
	if (name == "sauvola-opencv") return Baseline::sauvola_opencv;
	if (name == "sauvola-scikit") return Baseline::sauvola_scikit;
	if (name == "sauvola-pythreshold") return Baseline::sauvola_pythreshold;
	throw std::invalid_argument("unknown baseline '" + std::string(name) +
	                            "' (expected otsu, sauvola-opencv, sauvola-scikit, sauvola-pythreshold)");
}

std::string baseline_name(Baseline baseline)
{
	switch (baseline) {
	case Baseline::otsu: return "otsu";
	case Baseline::sauvola_opencv: return "sauvola-opencv";
	case Baseline::sauvola_scikit: return "sauvola-scikit";
	case Baseline::sauvola_pythreshold: return "sauvola-pythreshold";
	}
	return "unknown";
}

BinaryMap run_baseline_on(Baseline baseline, const GrayImage& image)
{
	switch (baseline) {
	case Baseline::otsu: return threshold_apply(image, otsu_threshold(image).threshold);
	case Baseline::sauvola_opencv: return threshold_apply(image, sauvola_threshold(image, kOpenCvSauvola));
	case Baseline::sauvola_scikit: return threshold_apply(image, sauvola_threshold(image, kScikitSauvola));
	case Baseline::sauvola_pythreshold: return threshold_apply(image, sauvola_threshold(image, kPythresholdSauvola));
	}
	throw std::logic_error("unhandled baseline");
}

ScoreReport run_baseline(Baseline baseline, const std::vector<DatasetManifest>& datasets, bool with_fps)
{
	std::vector<FoldScores> folds;
	for (const auto& ds : datasets) {
		FoldScores fold{ds.name, {}};
		for (const auto& entry : ds.entries) {
			try {
				const ImagePair pair = load_pair(entry.image, entry.truth);
				fold.images.push_back(score_image(pair.id, run_baseline_on(baseline, pair.image), pair.truth, with_fps));
			} catch (const DataError& e) {
				ImageScore failed;
				failed.id = entry.image.stem().string();
				failed.error = e.what();
				fold.images.push_back(std::move(failed));
			}
		}
		folds.push_back(std::move(fold));
	}
	return aggregate_score(folds);
}

const std::vector<ReferenceRow>& reference_scores()
{
	static const std::vector<ReferenceRow> rows = {
		{"DIBCO 2011", "Otsu", 82.10, 84.80, 15.70, 9.00},
		{"DIBCO 2011", "Howe", 91.70, 92.00, 19.30, 3.40},
		{"DIBCO 2011", "MRAtt", 93.16, 95.23, 19.78, 2.20},
		{"DIBCO 2011", "DeepOtsu", 93.40, 95.80, 19.90, 1.90},
		{"DIBCO 2011", "SAE", 92.77, 95.68, 19.55, 2.52},
		{"DIBCO 2011", "DSN", 93.30, 96.40, 20.10, 2.00},
		{"DIBCO 2011", "cGANs", 93.81, 95.26, 20.30, 1.82},
		{"DIBCO 2011", "Sauvola", 82.10, 87.70, 15.60, 8.50},
		{"DIBCO 2011", "Sauvola MS", 79.70, 81.78, 14.91, 11.67},
		{"DIBCO 2011", "SauvolaNet (published)", 94.32, 96.40, 20.55, 1.97},

		{"H-DIBCO 2014", "Otsu", 91.70, 95.70, 18.70, 2.70},
		{"H-DIBCO 2014", "Howe", 96.50, 97.40, 22.20, 1.10},
		{"H-DIBCO 2014", "MRAtt", 94.90, 95.98, 21.09, 1.85},
		{"H-DIBCO 2014", "DeepOtsu", 95.90, 97.20, 22.10, 0.90},
		{"H-DIBCO 2014", "SAE", 95.81, 96.78, 21.26, 1.00},
		{"H-DIBCO 2014", "DSN", 96.70, 97.60, 23.20, 0.70},
		{"H-DIBCO 2014", "DD-GAN", 96.27, 97.66, 22.60, 1.27},
		{"H-DIBCO 2014", "cGANs", 96.41, 97.55, 22.12, 1.07},
		{"H-DIBCO 2014", "Sauvola", 84.70, 87.80, 17.80, 2.60},
		{"H-DIBCO 2014", "Sauvola MS", 85.83, 86.83, 17.81, 4.88},
		{"H-DIBCO 2014", "SauvolaNet (published)", 97.83, 98.74, 24.13, 0.65},

		{"DIBCO 2016", "Otsu", 86.60, 89.90, 17.80, 5.60},
		{"DIBCO 2016", "Howe", 87.50, 82.30, 18.10, 5.40},
		{"DIBCO 2016", "MRAtt", 91.68, 94.71, 19.59, 2.93},
		{"DIBCO 2016", "DeepOtsu", 91.40, 94.30, 19.60, 2.90},
		{"DIBCO 2016", "SAE", 90.72, 92.62, 18.79, 3.28},
		{"DIBCO 2016", "DSN", 90.10, 83.60, 19.00, 3.50},
		{"DIBCO 2016", "DD-GAN", 89.98, 85.23, 18.83, 3.61},
		{"DIBCO 2016", "cGANs", 91.66, 94.58, 19.64, 2.82},
		{"DIBCO 2016", "Sauvola", 84.60, 88.40, 17.10, 6.30},
		{"DIBCO 2016", "Sauvola MS", 79.84, 81.61, 14.76, 11.50},
		{"DIBCO 2016", "SauvolaNet (published)", 90.25, 95.26, 18.97, 3.51},
	};
	return rows;
}

void write_comparison_table(std::ostream& out, const std::string& dataset, const std::string& method,
                            const AggregateScore& ours)
{
	auto cell = [&](double v) {
		if (std::isinf(v)) out << std::setw(9) << "inf";
		else out << std::setw(9) << std::fixed << std::setprecision(2) << v;
	};
	out << "Dataset: " << dataset << '\n';
	out << std::left << std::setw(26) << "Method" << std::right << std::setw(9) << "FM(%)" << std::setw(9)
	    << "Fps(%)" << std::setw(9) << "PSNR" << std::setw(9) << "DRD" << '\n';
	out << std::string(62, '-') << '\n';
	for (const auto& row : reference_scores()) {
		if (row.dataset != dataset) continue;
		out << std::left << std::setw(26) << row.method << std::right;
		cell(row.fm);
		cell(row.fps);
		cell(row.psnr);
		cell(row.drd);
		out << '\n';
	}
	out << std::left << std::setw(26) << method << std::right;
	cell(ours.fm);
	if (ours.fps_approx) cell(*ours.fps_approx);
	else out << std::setw(9) << "-";
	cell(ours.psnr);
	cell(ours.drd);
	out << '\n';
	if (ours.fps_approx) out << "Fps for " << method << " is approximate (skeleton recall).\n";
}

} // namespace sauvolanet
