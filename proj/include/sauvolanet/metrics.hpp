#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sauvolanet/image.hpp"

namespace sauvolanet {

// F-measure in percent with ink (-1) as the positive class; 0 when P + R = 0.
double f_measure(const BinaryMap& pred, const BinaryMap& truth);

// 10 log10(1 / MSE) over {0, 1} maps; +infinity for identical maps.
double psnr(const BinaryMap& pred, const BinaryMap& truth);

struct DrdResult {
	double value = 0.0;
	std::size_t nubn = 0; // non-uniform 8x8 truth blocks
	bool degenerate = false; // nubn == 0; value is then the raw distortion sum
};

// Normalized 5x5 reciprocal-distance weights with a zero centre.
const std::array<std::array<double, 5>, 5>& drd_weights();

// Distance-reciprocal distortion. Each flipped pixel contributes the weighted
// count of truth pixels in its 5x5 neighbourhood that differ from the
// predicted value; neighbours outside the image contribute nothing. The sum is
// divided by the number of non-uniform 8x8 truth blocks (edge blocks may be
// partial).
DrdResult drd(const BinaryMap& pred, const BinaryMap& truth);

// Zhang-Suen thinning of the ink class.
BinaryMap skeletonize(const BinaryMap& map);

// Approximate pseudo F-measure: recall measured against the skeleton of the
// truth ink. Not the DIBCO reference recipe.
double pseudo_f_measure_approx(const BinaryMap& pred, const BinaryMap& truth);

struct ImageScore {
	std::string id;
	std::string fold;
	double fm = 0.0;
	double psnr = 0.0;
	double drd = 0.0;
	std::optional<double> fps_approx;
	std::optional<std::string> error; // set when the image could not be scored
};

ImageScore score_image(const std::string& id, const BinaryMap& pred, const BinaryMap& truth,
                       bool with_fps = false);

struct AggregateScore {
	double fm = 0.0;
	double psnr = 0.0;
	double drd = 0.0;
	std::optional<double> fps_approx;
	std::size_t infinite_psnr = 0; // excluded from the psnr mean
	std::size_t images = 0;
};

struct FoldScores {
	std::string name;
	std::vector<ImageScore> images;
};

struct ScoreReport {
	std::vector<ImageScore> images;
	std::vector<std::pair<std::string, AggregateScore>> folds;
	AggregateScore aggregate;
};

AggregateScore mean_score(const std::vector<ImageScore>& images);

// Mean over images inside each fold, then an unweighted mean across folds.
ScoreReport aggregate_score(const std::vector<FoldScores>& folds);

// One row per image, then `fold:<name>` rows and an `aggregate` row.
// Infinite PSNR is written as "inf".
void write_score_csv(const ScoreReport& report, std::ostream& out);

} // namespace sauvolanet
