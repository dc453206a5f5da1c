#include "sauvolanet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>

namespace sauvolanet {

namespace {

GrayImage random_page(std::size_t size, std::mt19937_64& rng)
{
	std::uniform_real_distribution<double> u(0.0, 1.0);
	GrayImage image(size, size);
	for (auto& v : image.pixels) v = u(rng);
	return image;
}

void perturb_head(SauvolaNet<double>& model, std::mt19937_64& rng)
{
	std::uniform_real_distribution<double> u(-0.5, 0.5);
	const std::size_t last = model.layout().size() - 1;
	for (const auto& name : {SauvolaNet<double>::conv_weight_name(last), SauvolaNet<double>::conv_bias_name(last)}) {
		for (auto& v : model.params().at(name).data_mut()) v = u(rng);
	}
	for (std::size_t i = 0; i < last; ++i) {
		for (auto& v : model.params().at(SauvolaNet<double>::norm_gain_name(i)).data_mut()) v += 0.2 * u(rng);
		for (auto& v : model.params().at(SauvolaNet<double>::norm_shift_name(i)).data_mut()) v += 0.2 * u(rng);
	}
}

double loss_value(const Tensor<double>& image, const SauvolaNet<double>& model, const BinaryMap& truth,
                  const HingeLossConfig& loss)
{
	NoGradGuard no_grad;
	return hinge_loss(image, g_sauvolanet(image, model), truth, loss).item();
}

} // namespace

GradcheckReport run_gradcheck(const GradcheckConfig& config)
{
	std::mt19937_64 rng(config.seed);
	SauvolaNet<double> model(config.windows, config.seed);
	perturb_head(model, rng);

	const GrayImage page = random_page(config.image_size, rng);
	BinaryMap truth(page.height, page.width);
	for (std::size_t p = 0; p < truth.size(); ++p) truth.labels[p] = page.pixels[p] < 0.5 ? kInk : kBackground;

	const auto image = image_tensor<double>(page);
	model.params().zero_grad();
	hinge_loss(image, g_sauvolanet(image, model), truth, config.loss).backward();

	GradcheckReport report;
	report.tolerance = config.tolerance;
	for (auto& param : model.params().entries()) {
		if (!param.trainable) continue;
		auto& tensor = param.value;
		const auto grad = tensor.grad();
		const std::vector<double> analytic(grad.begin(), grad.end());

		std::vector<std::size_t> coords(tensor.size());
		std::iota(coords.begin(), coords.end(), std::size_t{0});
		const bool full = param.name == "mws.k" || param.name == "mws.r";
		if (!full && coords.size() > config.samples_per_group) {
			std::shuffle(coords.begin(), coords.end(), rng);
			coords.resize(config.samples_per_group);
		}

		GroupReport group{param.name, coords.size(), 0.0, 0.0};
		for (auto c : coords) {
			auto& slot = tensor.data_mut()[c];
			const double saved = slot;
			slot = saved + config.step;
			const double plus = loss_value(image, model, truth, config.loss);
			slot = saved - config.step;
			const double minus = loss_value(image, model, truth, config.loss);
			slot = saved;

			const double numeric = (plus - minus) / (2.0 * config.step);
			const double a = analytic[c];
			const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), config.floor});
			group.max_rel_error = std::max(group.max_rel_error, rel);
			group.max_abs_grad = std::max(group.max_abs_grad, std::abs(a));
		}
		report.total_samples += group.samples;
		report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
		report.groups.push_back(std::move(group));
	}
	return report;
}

void write_gradcheck_report(const GradcheckReport& report, std::ostream& out)
{
	out << std::left << std::setw(24) << "group" << std::right << std::setw(9) << "samples" << std::setw(14)
	    << "max_rel_err" << std::setw(14) << "max_|grad|" << "  status\n";
	for (const auto& g : report.groups) {
		out << std::left << std::setw(24) << g.name << std::right << std::setw(9) << g.samples << std::setw(14)
		    << std::scientific << std::setprecision(3) << g.max_rel_error << std::setw(14) << g.max_abs_grad
		    << (g.max_rel_error < report.tolerance ? "  ok" : "  FAIL") << '\n';
	}
	out << std::defaultfloat << "samples " << report.total_samples << ", max relative error " << std::scientific
	    << std::setprecision(3) << report.max_rel_error << ", tolerance " << report.tolerance << std::defaultfloat
	    << ": " << (report.passed() ? "PASS" : "FAIL") << '\n';
}

} // namespace sauvolanet
