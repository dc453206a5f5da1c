#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sauvolanet/model.hpp"

namespace sauvolanet {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

enum class Precision { f32, f64 };

struct RunConfig {
	std::string subcommand;
	std::vector<std::filesystem::path> inputs;
	std::optional<std::filesystem::path> out;
	std::optional<std::filesystem::path> checkpoint;
	std::vector<double> classic; // W K R
	std::optional<std::filesystem::path> dataset_root;
	std::vector<std::filesystem::path> manifests;
	std::vector<std::filesystem::path> validation_manifests;
	std::optional<std::filesystem::path> log;
	std::uint64_t seed = kDefaultSeed;
	std::size_t steps = 1000;
	std::size_t batch = 32;
	std::size_t patch = 256;
	double learning_rate = 1e-3;
	std::size_t validate_every = 100;
	std::vector<int> windows; // empty: default set
	Precision precision = Precision::f32;
	std::size_t threads = 1;
	bool dump_thresholds = false;
	bool with_fps = false;
	std::string method;  // baseline name
	std::string compare; // dataset name for the side-by-side table
	std::size_t gradcheck_size = 14;
	std::size_t gradcheck_samples = 4;
	std::string inject_fault;
};

// Parses argv, runs the subcommand and returns its exit code. Messages go to
// `out` (reports) and `err` (diagnostics).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace sauvolanet
