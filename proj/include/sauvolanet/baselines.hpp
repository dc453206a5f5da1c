#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "sauvolanet/data.hpp"
#include "sauvolanet/metrics.hpp"

namespace sauvolanet {

enum class Baseline { otsu, sauvola_opencv, sauvola_scikit, sauvola_pythreshold };

Baseline parse_baseline(std::string_view name);
std::string baseline_name(Baseline baseline);

BinaryMap run_baseline_on(Baseline baseline, const GrayImage& image);

// Fixed-parameter binarization of every dataset; each dataset is one fold.
ScoreReport run_baseline(Baseline baseline, const std::vector<DatasetManifest>& datasets, bool with_fps = false);

// Published reference scores used for side-by-side tables.
struct ReferenceRow {
	std::string dataset;
	std::string method;
	double fm, fps, psnr, drd;
};

const std::vector<ReferenceRow>& reference_scores();

// Plain-text table: reference rows for `dataset` followed by `ours`.
void write_comparison_table(std::ostream& out, const std::string& dataset, const std::string& method,
                            const AggregateScore& ours);

} // namespace sauvolanet
