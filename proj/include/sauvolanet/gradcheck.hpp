#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sauvolanet/model.hpp"

namespace sauvolanet {

struct GradcheckConfig {
	std::uint64_t seed = kDefaultSeed;
	std::size_t image_size = 14;
	std::size_t samples_per_group = 4; // k and r are always checked in full
	double step = 1e-6;
	double tolerance = 1e-3;
	double floor = 1e-6; // denominator floor of the relative error
	WindowSet windows = WindowSet::defaults();
	HingeLossConfig loss;
};

struct GroupReport {
	std::string name;
	std::size_t samples = 0;
	double max_rel_error = 0.0;
	double max_abs_grad = 0.0;
};

struct GradcheckReport {
	std::vector<GroupReport> groups;
	std::size_t total_samples = 0;
	double max_rel_error = 0.0;
	double tolerance = 0.0;
	bool passed() const { return max_rel_error < tolerance; }
};

// Central finite differences of the mean hinge loss against the analytic
// gradient, in double precision, on a random page and random labels. The
// zero-initialised attention head is re-drawn so that every upstream group
// receives a non-zero gradient.
GradcheckReport run_gradcheck(const GradcheckConfig& config = {});

void write_gradcheck_report(const GradcheckReport& report, std::ostream& out);

} // namespace sauvolanet
