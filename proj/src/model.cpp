#include "sauvolanet/model.hpp"

#include <cmath>
#include <random>

#include "sauvolanet/ops.hpp"
#include "sauvolanet/window_stats.hpp"

namespace sauvolanet {

std::vector<ConvSpec> pwa_layout(std::size_t window_count)
{
	return {{8, 3, 1}, {16, 3, 1}, {32, 3, 2}, {32, 3, 2}, {16, 3, 1}, {int(window_count), 1, 1}};
}

template <typename Real>
SauvolaNet<Real>::SauvolaNet(WindowSet windows, std::uint64_t seed)
	: windows_(std::move(windows)), layout_(pwa_layout(windows_.size()))
{
	windows_.validate();
	const std::size_t N = windows_.size();
	params_.add("mws.k", Tensor<Real>::full({N}, Real(0.2)));
	params_.add("mws.r", Tensor<Real>::full({N}, Real(0.5)), kRFloor);

	std::mt19937_64 rng(seed);
	std::size_t in_ch = 1;
	for (std::size_t i = 0; i < layout_.size(); ++i) {
		const auto& spec = layout_[i];
		const std::size_t ks = std::size_t(spec.ksize), out_ch = std::size_t(spec.filters);
		const bool last = i + 1 == layout_.size();
		std::vector<Real> w(ks * ks * in_ch * out_ch, Real(0));
		if (!last) {
			// He-style uniform bound on the fan-in.
			const double bound = std::sqrt(6.0 / double(ks * ks * in_ch));
			std::uniform_real_distribution<double> dist(-bound, bound);
			for (auto& v : w) v = Real(dist(rng));
		}
		params_.add(conv_weight_name(i), Tensor<Real>({ks, ks, in_ch, out_ch}, std::move(w)));
		params_.add(conv_bias_name(i), Tensor<Real>::zeros({out_ch}));
		if (!last) {
			params_.add(norm_gain_name(i), Tensor<Real>::full({out_ch}, Real(1)));
			params_.add(norm_shift_name(i), Tensor<Real>::zeros({out_ch}));
		}
		in_ch = out_ch;
	}
}

template <typename Real>
void SauvolaNet<Real>::set_sauvola_trainable(bool k_trainable, bool r_trainable)
{
	params_.set_trainable("mws.k", k_trainable);
	params_.set_trainable("mws.r", r_trainable);
}

template <typename Real>
Tensor<Real> image_tensor(const GrayImage& image, bool requires_grad)
{
	std::vector<Real> data(image.pixels.begin(), image.pixels.end());
	return Tensor<Real>({image.height, image.width, 1}, std::move(data), requires_grad);
}

template <typename Real>
Tensor<Real> mws_forward(const Tensor<Real>& image, const SauvolaNet<Real>& model)
{
	const auto stats = local_stats_stack(image, model.window_set().windows);
	return sauvola_stack(stats, model.k(), model.r());
}

template <typename Real>
Tensor<Real> pwa_forward(const Tensor<Real>& image, const SauvolaNet<Real>& model)
{
	if (image.rank() != 3 || image.dim(2) != 1) {
		throw ShapeError("pwa_forward: expected HxWx1 image, got " + shape_string(image.shape()));
	}
	const auto& params = model.params();
	const auto& layout = model.layout();
	Tensor<Real> h = image;
	for (std::size_t i = 0; i < layout.size(); ++i) {
		h = ops::conv2d(h, params.at(SauvolaNet<Real>::conv_weight_name(i)), params.at(SauvolaNet<Real>::conv_bias_name(i)),
		                layout[i].dilation);
		if (i + 1 < layout.size()) {
			h = ops::instance_norm(h, params.at(SauvolaNet<Real>::norm_gain_name(i)),
			                       params.at(SauvolaNet<Real>::norm_shift_name(i)));
			h = ops::relu(h);
		}
	}
	return ops::softmax_channels(h);
}

template <typename Real>
Tensor<Real> ast_fuse(const Tensor<Real>& stack, const Tensor<Real>& attention)
{
	if (stack.rank() != 3 || stack.shape() != attention.shape()) {
		throw ShapeError("ast_fuse: threshold stack " + shape_string(stack.shape()) + " and attention " +
		                 shape_string(attention.shape()) + " must be equal HxWxN shapes");
	}
	const std::size_t H = stack.dim(0), W = stack.dim(1), N = stack.dim(2);
	const auto s = stack.data();
	const auto a = attention.data();
	std::vector<Real> out(H * W);
	for (std::size_t p = 0; p < H * W; ++p) {
		double t = 0.0;
		for (std::size_t n = 0; n < N; ++n) t += double(a[p * N + n]) * s[p * N + n];
		out[p] = Real(t);
	}
	auto backward = [N](detail::Node<Real>& self) {
		auto& sp = *self.parents[0];
		auto& ap = *self.parents[1];
		const std::size_t P = self.data.size();
		if (sp.requires_grad) {
			auto ds = sp.grad_buffer();
			for (std::size_t p = 0; p < P; ++p)
				for (std::size_t n = 0; n < N; ++n) ds[p * N + n] += self.grad[p] * ap.data[p * N + n];
		}
		if (ap.requires_grad) {
			auto da = ap.grad_buffer();
			for (std::size_t p = 0; p < P; ++p)
				for (std::size_t n = 0; n < N; ++n) da[p * N + n] += self.grad[p] * sp.data[p * N + n];
		}
	};
	return Tensor<Real>::from_op({H, W}, std::move(out), "ast_fuse", {stack, attention}, std::move(backward));
}

template <typename Real>
Tensor<Real> g_sauvolanet(const Tensor<Real>& image, const SauvolaNet<Real>& model)
{
	return ast_fuse(mws_forward(image, model), pwa_forward(image, model));
}

template <typename Real>
ThresholdMap predict_thresholds(const GrayImage& image, const SauvolaNet<Real>& model)
{
	NoGradGuard no_grad;
	const auto t = g_sauvolanet(image_tensor<Real>(image), model);
	ThresholdMap out(image.height, image.width);
	std::copy(t.data().begin(), t.data().end(), out.values.begin());
	return out;
}

template <typename Real>
BinaryMap f_sauvolanet(const GrayImage& image, const SauvolaNet<Real>& model)
{
	NoGradGuard no_grad;
	const auto d = image_tensor<Real>(image);
	const auto t = g_sauvolanet(d, model);
	// Compare at model precision so training and inference agree on ties.
	BinaryMap out(image.height, image.width);
	for (std::size_t p = 0; p < out.size(); ++p) out.labels[p] = d.data()[p] >= t.data()[p] ? kBackground : kInk;
	return out;
}

template <typename Real>
Tensor<Real> hinge_loss(const Tensor<Real>& image, const Tensor<Real>& thresholds, const BinaryMap& truth,
                        const HingeLossConfig& config)
{
	if (!(config.alpha > 0.0)) throw std::invalid_argument("hinge_loss: alpha must be positive");
	if (thresholds.rank() != 2 || image.size() != thresholds.size() || image.dim(0) != thresholds.dim(0) ||
	    image.dim(1) != thresholds.dim(1)) {
		throw ShapeError("hinge_loss: image " + shape_string(image.shape()) + " and thresholds " +
		                 shape_string(thresholds.shape()) + " do not align");
	}
	if (truth.height != thresholds.dim(0) || truth.width != thresholds.dim(1)) {
		throw ShapeError("hinge_loss: truth extent does not match thresholds");
	}
	for (auto b : truth.labels) {
		if (b != kInk && b != kBackground) {
			throw std::invalid_argument("hinge_loss: truth labels must be -1 or +1, found " + std::to_string(int(b)));
		}
	}

	const std::size_t P = thresholds.size();
	const auto d = image.data();
	const auto t = thresholds.data();
	const double alpha = config.alpha;
	double total = 0.0;
	std::vector<Real> slope(P, Real(0)); // d loss / d T per pixel
	for (std::size_t p = 0; p < P; ++p) {
		const double margin = 1.0 - alpha * (double(d[p]) - double(t[p])) * truth.labels[p];
		if (margin > 0.0) {
			total += margin;
			slope[p] = Real(alpha * truth.labels[p] / double(P));
		}
	}

	auto backward = [slope = std::move(slope)](detail::Node<Real>& self) {
		const Real g = self.grad[0];
		auto& ip = *self.parents[0];
		auto& tp = *self.parents[1];
		if (tp.requires_grad) {
			auto dt = tp.grad_buffer();
			for (std::size_t p = 0; p < slope.size(); ++p) dt[p] += g * slope[p];
		}
		if (ip.requires_grad) {
			auto dd = ip.grad_buffer();
			for (std::size_t p = 0; p < slope.size(); ++p) dd[p] -= g * slope[p];
		}
	};
	return Tensor<Real>::from_op({}, {Real(total / double(P))}, "hinge_loss", {image, thresholds},
	                             std::move(backward));
}

#define SAUVOLANET_INSTANTIATE_MODEL(Real)                                                                        \
	template class SauvolaNet<Real>;                                                                              \
	template Tensor<Real> image_tensor<Real>(const GrayImage&, bool);                                            \
	template Tensor<Real> mws_forward(const Tensor<Real>&, const SauvolaNet<Real>&);                             \
	template Tensor<Real> pwa_forward(const Tensor<Real>&, const SauvolaNet<Real>&);                             \
	template Tensor<Real> ast_fuse(const Tensor<Real>&, const Tensor<Real>&);                                    \
	template Tensor<Real> g_sauvolanet(const Tensor<Real>&, const SauvolaNet<Real>&);                            \
	template ThresholdMap predict_thresholds(const GrayImage&, const SauvolaNet<Real>&);                         \
	template BinaryMap f_sauvolanet(const GrayImage&, const SauvolaNet<Real>&);                                  \
	template Tensor<Real> hinge_loss(const Tensor<Real>&, const Tensor<Real>&, const BinaryMap&,                  \
	                                 const HingeLossConfig&);

SAUVOLANET_INSTANTIATE_MODEL(float)
SAUVOLANET_INSTANTIATE_MODEL(double)

} // namespace sauvolanet
