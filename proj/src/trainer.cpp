#include "sauvolanet/trainer.hpp"

#include <algorithm>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "sauvolanet/metrics.hpp"
#include "sauvolanet/ops.hpp"

namespace sauvolanet {

namespace {

struct Draw {
	std::size_t source;
	PatchSpec patch;
	FlipSpec flips;
	bool operator==(const Draw&) const = default;
};

struct UniqueDraw {
	Draw draw;
	std::size_t count;
};

// Stream offset so crop/flip draws do not replay the weight-init sequence.
constexpr std::uint64_t kTrainStream = 0x9E3779B97F4A7C15ull;

} // namespace

void retain_freed_memory()
{
#if defined(__GLIBC__)
	mallopt(M_MMAP_THRESHOLD, 1 << 30);
	mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

template <typename Real>
double evaluate_fm(const SauvolaNet<Real>& model, const std::vector<ImagePair>& pages)
{
	if (pages.empty()) return 0.0;
	double total = 0.0;
	for (const auto& page : pages) total += f_measure(f_sauvolanet(page.image, model), page.truth);
	return total / double(pages.size());
}

template <typename Real>
TrainResult train(const std::vector<ImagePair>& dataset, SauvolaNet<Real>& model, const TrainConfig& config,
                  const std::vector<ImagePair>* validation, const TrainCallback& on_log, AdamState<Real>* optimizer)
{
	if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
	if (config.batch == 0 || config.patch == 0) throw std::invalid_argument("train: batch and patch must be positive");

	std::vector<ImagePair> padded;
	padded.reserve(dataset.size());
	for (const auto& pair : dataset) padded.push_back(reflect_pad(pair, config.patch));

	AdamState<Real> local_state;
	AdamState<Real>& state = optimizer ? *optimizer : local_state;
	state.config.learning_rate = config.learning_rate;

	Rng rng(config.seed ^ kTrainStream);
	std::uniform_int_distribution<std::size_t> pick(0, padded.size() - 1);

	TrainResult result;
	const bool validating = validation && !validation->empty() && config.validate_every > 0;
	auto snapshot = [&](std::size_t step) {
		TrainingMetadata meta;
		meta.step_count = step;
		meta.seed = config.seed;
		meta.loss_count = result.loss_history.size();
		meta.final_loss = result.loss_history.empty() ? 0.0 : result.loss_history.back();
		meta.loss_digest = loss_history_digest(result.loss_history);
		return make_checkpoint(model, &state, meta);
	};

	for (std::size_t step = 1; step <= config.steps; ++step) {
		std::vector<UniqueDraw> draws;
		for (std::size_t b = 0; b < config.batch; ++b) {
			Draw d;
			d.source = pick(rng);
			d.patch = draw_patch(padded[d.source].image.height, padded[d.source].image.width, config.patch, rng);
			d.flips = draw_flips(rng);
			auto it = std::find_if(draws.begin(), draws.end(), [&](const UniqueDraw& u) { return u.draw == d; });
			if (it == draws.end()) draws.push_back({d, 1});
			else it->count += 1;
		}

		double batch_loss = 0.0;
		for (const auto& u : draws) {
			const ImagePair sample = apply_flips(extract_patch(padded[u.draw.source], u.draw.patch), u.draw.flips);
			const auto image = image_tensor<Real>(sample.image);
			const auto thresholds = g_sauvolanet(image, model);
			const auto loss = hinge_loss(image, thresholds, sample.truth, config.loss);
			const double weight = double(u.count) / double(config.batch);
			batch_loss += weight * double(loss.item());
			ops::scale(loss, weight).backward();
			result.forward_passes += 1;
		}
		adam_step(model.params(), state);
		result.loss_history.push_back(batch_loss);

		TrainLogRow row{step, batch_loss, std::nullopt};
		if (validating && (step % config.validate_every == 0 || step == config.steps)) {
			row.validation_fm = evaluate_fm(model, *validation);
			result.validation.push_back(row);
			if (!result.best_validation_fm || *row.validation_fm > *result.best_validation_fm) {
				result.best_validation_fm = row.validation_fm;
				result.best_step = step;
				result.checkpoint = snapshot(step);
			}
		}
		if (on_log && (row.validation_fm || (config.log_every > 0 && step % config.log_every == 0) ||
		               step == config.steps)) {
			on_log(row);
		}
	}

	if (!result.best_validation_fm) {
		result.checkpoint = snapshot(config.steps);
		result.best_step = config.steps;
	} else {
		// Keep the history digest of the full run even when an earlier snapshot won.
		result.checkpoint.metadata.loss_count = result.loss_history.size();
		result.checkpoint.metadata.loss_digest = loss_history_digest(result.loss_history);
		result.checkpoint.metadata.final_loss = result.loss_history.back();
	}
	return result;
}

template double evaluate_fm(const SauvolaNet<float>&, const std::vector<ImagePair>&);
template double evaluate_fm(const SauvolaNet<double>&, const std::vector<ImagePair>&);
template TrainResult train(const std::vector<ImagePair>&, SauvolaNet<float>&, const TrainConfig&,
                           const std::vector<ImagePair>*, const TrainCallback&, AdamState<float>*);
template TrainResult train(const std::vector<ImagePair>&, SauvolaNet<double>&, const TrainConfig&,
                           const std::vector<ImagePair>*, const TrainCallback&, AdamState<double>*);

} // namespace sauvolanet
