#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sauvolanet/tensor.hpp"

namespace sauvolanet {

template <typename Real>
struct Parameter {
	std::string name;
	Tensor<Real> value;
	bool trainable = true;
	std::optional<double> lower_bound; // re-applied after every optimizer step
};

// Named, ordered collection of model parameters.
template <typename Real>
class ParamStore {
public:
	Tensor<Real>& add(std::string name, Tensor<Real> value, std::optional<double> lower_bound = std::nullopt);

	std::size_t size() const { return params_.size(); }
	std::vector<Parameter<Real>>& entries() { return params_; }
	const std::vector<Parameter<Real>>& entries() const { return params_; }

	Parameter<Real>* find(const std::string& name);
	const Parameter<Real>* find(const std::string& name) const;
	Tensor<Real>& at(const std::string& name);
	const Tensor<Real>& at(const std::string& name) const;

	// Frozen parameters take no gradient and are skipped by the optimizer.
	void set_trainable(const std::string& name, bool trainable);

	std::size_t trainable_count() const;
	void zero_grad();
	void apply_bounds();

private:
	std::vector<Parameter<Real>> params_;
};

struct AdamConfig {
	double learning_rate = 1e-3;
	double beta1 = 0.9;
	double beta2 = 0.999;
	double epsilon = 1e-8;
};

template <typename Real>
struct AdamState {
	AdamConfig config;
	std::uint64_t step_count = 0;
	// Indexed like ParamStore::entries(); sized lazily on the first step.
	std::vector<std::vector<double>> first_moment;
	std::vector<std::vector<double>> second_moment;
};

class MissingGradientError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

// Bias-corrected Adam over every trainable parameter, then bounds, then grads cleared.
template <typename Real>
void adam_step(ParamStore<Real>& params, AdamState<Real>& state);

extern template class ParamStore<float>;
extern template class ParamStore<double>;

} // namespace sauvolanet
