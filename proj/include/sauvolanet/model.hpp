#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sauvolanet/image.hpp"
#include "sauvolanet/optim.hpp"
#include "sauvolanet/sauvola.hpp"
#include "sauvolanet/tensor.hpp"

namespace sauvolanet {

inline constexpr std::uint64_t kDefaultSeed = 20210905;

struct ConvSpec {
	int filters;
	int ksize;
	int dilation;
};

// Window-attention network layout: five 3x3 conv blocks (conv, instance
// norm, ReLU), the middle two atrous with rate 2, then a 1x1 conv with one
// output per window feeding a channel softmax.
std::vector<ConvSpec> pwa_layout(std::size_t window_count);

struct HingeLossConfig {
	double alpha = 16.0;
};

// Multi-window Sauvola branch with trainable (k, r) per window plus the
// pixelwise window-attention branch. Parameter names:
//   mws.k, mws.r                      [N]
//   pwa.conv<i>.weight / .bias        [k, k, Cin, Cout] / [Cout]
//   pwa.norm<i>.gain / .shift         [Cout]   (i < 5)
template <typename Real>
class SauvolaNet {
public:
	explicit SauvolaNet(WindowSet windows = WindowSet::defaults(), std::uint64_t seed = kDefaultSeed);

	const WindowSet& window_set() const { return windows_; }
	const std::vector<ConvSpec>& layout() const { return layout_; }
	ParamStore<Real>& params() { return params_; }
	const ParamStore<Real>& params() const { return params_; }

	const Tensor<Real>& k() const { return params_.at("mws.k"); }
	const Tensor<Real>& r() const { return params_.at("mws.r"); }

	std::size_t parameter_count() const { return params_.trainable_count(); }
	void set_sauvola_trainable(bool k_trainable, bool r_trainable);

	static std::string conv_weight_name(std::size_t i) { return "pwa.conv" + std::to_string(i) + ".weight"; }
	static std::string conv_bias_name(std::size_t i) { return "pwa.conv" + std::to_string(i) + ".bias"; }
	static std::string norm_gain_name(std::size_t i) { return "pwa.norm" + std::to_string(i) + ".gain"; }
	static std::string norm_shift_name(std::size_t i) { return "pwa.norm" + std::to_string(i) + ".shift"; }

private:
	WindowSet windows_;
	std::vector<ConvSpec> layout_;
	ParamStore<Real> params_;
};

extern template class SauvolaNet<float>;
extern template class SauvolaNet<double>;

// [H, W, 1] tensor view of a page.
template <typename Real>
Tensor<Real> image_tensor(const GrayImage& image, bool requires_grad = false);

// Threshold stack S: [H, W, N].
template <typename Real>
Tensor<Real> mws_forward(const Tensor<Real>& image, const SauvolaNet<Real>& model);

// Attention stack A: [H, W, N], rows summing to one.
template <typename Real>
Tensor<Real> pwa_forward(const Tensor<Real>& image, const SauvolaNet<Real>& model);

// T[i, j] = sum_n A[i, j, n] * S[i, j, n]; returns [H, W].
template <typename Real>
Tensor<Real> ast_fuse(const Tensor<Real>& stack, const Tensor<Real>& attention);

template <typename Real>
Tensor<Real> g_sauvolanet(const Tensor<Real>& image, const SauvolaNet<Real>& model);

// Inference helpers; no graph is recorded.
template <typename Real>
ThresholdMap predict_thresholds(const GrayImage& image, const SauvolaNet<Real>& model);

template <typename Real>
BinaryMap f_sauvolanet(const GrayImage& image, const SauvolaNet<Real>& model);

// Mean over pixels of max(1 - alpha * (D - T) * B, 0).
template <typename Real>
Tensor<Real> hinge_loss(const Tensor<Real>& image, const Tensor<Real>& thresholds, const BinaryMap& truth,
                        const HingeLossConfig& config = {});

} // namespace sauvolanet
