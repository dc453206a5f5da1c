#include "sauvolanet/optim.hpp"

#include <algorithm>
#include <cmath>

namespace sauvolanet {

template <typename Real>
Tensor<Real>& ParamStore<Real>::add(std::string name, Tensor<Real> value, std::optional<double> lower_bound)
{
	if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
	value.set_requires_grad(true);
	params_.push_back({std::move(name), std::move(value), true, lower_bound});
	return params_.back().value;
}

template <typename Real>
Parameter<Real>* ParamStore<Real>::find(const std::string& name)
{
	auto it = std::find_if(params_.begin(), params_.end(), [&](const auto& p) { return p.name == name; });
	return it == params_.end() ? nullptr : &*it;
}

template <typename Real>
const Parameter<Real>* ParamStore<Real>::find(const std::string& name) const
{
	return const_cast<ParamStore*>(this)->find(name);
}

template <typename Real>
Tensor<Real>& ParamStore<Real>::at(const std::string& name)
{
	auto* p = find(name);
	if (!p) throw std::out_of_range("no parameter named " + name);
	return p->value;
}

template <typename Real>
const Tensor<Real>& ParamStore<Real>::at(const std::string& name) const
{
	return const_cast<ParamStore*>(this)->at(name);
}

template <typename Real>
void ParamStore<Real>::set_trainable(const std::string& name, bool trainable)
{
	auto* p = find(name);
	if (!p) throw std::out_of_range("no parameter named " + name);
	p->trainable = trainable;
	p->value.set_requires_grad(trainable);
	if (!trainable) p->value.zero_grad();
}

template <typename Real>
std::size_t ParamStore<Real>::trainable_count() const
{
	std::size_t n = 0;
	for (const auto& p : params_)
		if (p.trainable) n += p.value.size();
	return n;
}

template <typename Real>
void ParamStore<Real>::zero_grad()
{
	for (auto& p : params_) p.value.zero_grad();
}

template <typename Real>
void ParamStore<Real>::apply_bounds()
{
	for (auto& p : params_) {
		if (!p.lower_bound) continue;
		for (auto& v : p.value.data_mut()) v = std::max(v, Real(*p.lower_bound));
	}
}

template <typename Real>
void adam_step(ParamStore<Real>& params, AdamState<Real>& state)
{
	auto& entries = params.entries();
	for (const auto& p : entries) {
		if (p.trainable && !p.value.has_grad()) throw MissingGradientError("no gradient for parameter " + p.name);
	}
	if (state.first_moment.size() != entries.size()) {
		state.first_moment.resize(entries.size());
		state.second_moment.resize(entries.size());
	}

	state.step_count += 1;
	const auto& cfg = state.config;
	const double t = double(state.step_count);
	const double correction1 = 1.0 - std::pow(cfg.beta1, t);
	const double correction2 = 1.0 - std::pow(cfg.beta2, t);

	for (std::size_t i = 0; i < entries.size(); ++i) {
		auto& p = entries[i];
		if (!p.trainable) continue;
		auto& m = state.first_moment[i];
		auto& v = state.second_moment[i];
		if (m.size() != p.value.size()) {
			m.assign(p.value.size(), 0.0);
			v.assign(p.value.size(), 0.0);
		}
		auto data = p.value.data_mut();
		const auto grad = p.value.grad();
		for (std::size_t j = 0; j < data.size(); ++j) {
			const double g = grad[j];
			m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
			v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
			const double m_hat = m[j] / correction1;
			const double v_hat = v[j] / correction2;
			data[j] = Real(data[j] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
		}
	}
	params.apply_bounds();
	params.zero_grad();
}

template class ParamStore<float>;
template class ParamStore<double>;
template void adam_step(ParamStore<float>&, AdamState<float>&);
template void adam_step(ParamStore<double>&, AdamState<double>&);

} // namespace sauvolanet
