#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "sauvolanet/checkpoint.hpp"
#include "sauvolanet/data.hpp"
#include "sauvolanet/model.hpp"

namespace sauvolanet {

struct TrainConfig {
	std::size_t batch = 32;
	std::size_t patch = 256;
	double learning_rate = 1e-3;
	std::size_t steps = 0;
	std::uint64_t seed = kDefaultSeed;
	HingeLossConfig loss;
	std::size_t validate_every = 100;
	std::size_t log_every = 10;
};

struct TrainLogRow {
	std::size_t step = 0;
	double loss = 0.0;
	std::optional<double> validation_fm;
};

struct TrainResult {
	// Best-validation-FM weights when a validation set is given, else final weights.
	ModelCheckpoint checkpoint;
	std::vector<double> loss_history;
	std::vector<TrainLogRow> validation;
	std::optional<double> best_validation_fm;
	std::size_t best_step = 0;
	std::size_t forward_passes = 0; // distinct patches evaluated
};

using TrainCallback = std::function<void(const TrainLogRow&)>;

// Mean F-measure (percent) of the model over whole pages.
template <typename Real>
double evaluate_fm(const SauvolaNet<Real>& model, const std::vector<ImagePair>& pages);

// Mini-batch training with the hinge loss and Adam. Every random choice
// comes from `config.seed`. Identical crops drawn into the same batch are
// evaluated once and weighted by multiplicity, which leaves the batch-mean
// loss and its gradient unchanged.
template <typename Real>
TrainResult train(const std::vector<ImagePair>& dataset, SauvolaNet<Real>& model, const TrainConfig& config,
                  const std::vector<ImagePair>* validation = nullptr, const TrainCallback& on_log = {},
                  AdamState<Real>* optimizer = nullptr);

// Stops glibc from returning freed heap memory to the kernel. Every training
// step frees and reallocates megabytes of activations, and re-faulting those
// pages otherwise costs about a fifth of the step time. Process-wide; no-op on
// other C libraries.
void retain_freed_memory();

} // namespace sauvolanet
