#include "sauvolanet/ops.hpp"

#include <algorithm>
#include <cmath>

#include "blas.hpp"

namespace sauvolanet::ops {

namespace {

void require(bool ok, const std::string& message)
{
	if (!ok) throw ShapeError(message);
}

// Output positions per GEMM chunk; keeps the working set in cache.
constexpr std::size_t kChunkPositions = 2048;

// A k x k convolution is evaluated as one GEMM per kernel tap on a
// zero-padded copy of the input. Rows of the padded image are `padded_width`
// positions long, so shifting by a tap is a constant offset in the flattened
// buffer. Output positions in the padding columns are computed and dropped.
struct ConvGeometry {
	int height, width, in_ch, out_ch, ksize, dilation;
	std::size_t pad() const { return std::size_t(ksize / 2) * dilation; }
	std::size_t padded_width() const { return width + 2 * pad(); }
	// Slack past the last padded row lets the widest tap read full chunks.
	std::size_t padded_positions() const { return (height + 2 * pad()) * padded_width() + 2 * pad(); }
	std::size_t tap_offset(int ky, int kx) const
	{
		return std::size_t(ky) * dilation * padded_width() + std::size_t(kx) * dilation;
	}
	int rows_per_chunk() const
	{
		return int(std::clamp<std::size_t>(kChunkPositions / padded_width(), 1, std::size_t(height)));
	}
};

template <typename Real>
std::vector<Real> pad_input(const Real* x, const ConvGeometry& g)
{
	const std::size_t C = g.in_ch, Wp = g.padded_width(), p = g.pad();
	std::vector<Real> xp(g.padded_positions() * C, Real(0));
	for (int y = 0; y < g.height; ++y) {
		std::copy_n(x + std::size_t(y) * g.width * C, std::size_t(g.width) * C, xp.begin() + ((y + p) * Wp + p) * C);
	}
	return xp;
}

} // namespace

template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& input, const Tensor<Real>& weights, const Tensor<Real>& bias, int dilation)
{
	require(input.rank() == 3, "conv2d: input must be HxWxC, got " + shape_string(input.shape()));
	require(weights.rank() == 4, "conv2d: weights must be k x k x Cin x Cout, got " + shape_string(weights.shape()));
	const auto& ws = weights.shape();
	require(ws[0] == ws[1] && ws[0] % 2 == 1, "conv2d: kernel must be square with odd size, got " + shape_string(ws));
	require(ws[2] == input.dim(2), "conv2d: input has " + std::to_string(input.dim(2)) +
	                                   " channels but weights expect " + std::to_string(ws[2]));
	require(bias.rank() == 1 && bias.dim(0) == ws[3],
	        "conv2d: bias shape " + shape_string(bias.shape()) + " does not match Cout " + std::to_string(ws[3]));
	require(dilation >= 1, "conv2d: dilation must be positive");

	const ConvGeometry g{int(input.dim(0)), int(input.dim(1)), int(ws[2]), int(ws[3]), int(ws[0]), dilation};
	const std::size_t pixels = std::size_t(g.height) * g.width;
	const int Cin = g.in_ch, Cout = g.out_ch;

	std::vector<Real> out(pixels * Cout);
	const auto b = bias.data();
	for (std::size_t p = 0; p < pixels; ++p) std::copy(b.begin(), b.end(), out.begin() + p * Cout);

	const Real* w = weights.data().data();
	if (g.ksize == 1) {
		detail::gemm(false, false, int(pixels), Cout, Cin, Real(1), input.data().data(), Cin, w, Cout, Real(1),
		             out.data(), Cout);
	} else {
		const std::vector<Real> xp = pad_input(input.data().data(), g);
		const std::size_t Wp = g.padded_width();
		const int chunk = g.rows_per_chunk();
		std::vector<Real> acc(std::size_t(chunk) * Wp * Cout);
		for (int r0 = 0; r0 < g.height; r0 += chunk) {
			const int r1 = std::min(g.height, r0 + chunk);
			const std::size_t q0 = std::size_t(r0) * Wp, positions = std::size_t(r1 - r0) * Wp;
			for (int ky = 0; ky < g.ksize; ++ky) {
				for (int kx = 0; kx < g.ksize; ++kx) {
					const bool first = ky == 0 && kx == 0;
					detail::gemm(false, false, int(positions), Cout, Cin, Real(1), xp.data() + (q0 + g.tap_offset(ky, kx)) * Cin,
					             Cin, w + std::size_t(ky * g.ksize + kx) * Cin * Cout, Cout, Real(first ? 0 : 1),
					             acc.data(), Cout);
				}
			}
			for (int y = r0; y < r1; ++y) {
				const Real* src = acc.data() + std::size_t(y - r0) * Wp * Cout;
				Real* dst = out.data() + std::size_t(y) * g.width * Cout;
				for (std::size_t i = 0; i < std::size_t(g.width) * Cout; ++i) dst[i] += src[i];
			}
		}
	}

	auto backward = [g](detail::Node<Real>& self) {
		auto& xin = *self.parents[0];
		auto& wt = *self.parents[1];
		auto& bs = *self.parents[2];
		const Real* grad = self.grad.data();
		const int Cin = g.in_ch, Cout = g.out_ch;
		const std::size_t pixels = std::size_t(g.height) * g.width;

		if (bs.requires_grad) {
			auto db = bs.grad_buffer();
			for (std::size_t p = 0; p < pixels; ++p)
				for (int co = 0; co < Cout; ++co) db[co] += grad[p * Cout + co];
		}
		if (g.ksize == 1) {
			if (wt.requires_grad) {
				detail::gemm(true, false, Cin, Cout, int(pixels), Real(1), xin.data.data(), Cin, grad, Cout, Real(1),
				             wt.grad_buffer().data(), Cout);
			}
			if (xin.requires_grad) {
				detail::gemm(false, true, int(pixels), Cin, Cout, Real(1), grad, Cout, wt.data.data(), Cout, Real(1),
				             xin.grad_buffer().data(), Cin);
			}
			return;
		}

		const std::size_t Wp = g.padded_width(), pad = g.pad();
		std::vector<Real> xp, dxp;
		if (wt.requires_grad) xp = pad_input(xin.data.data(), g);
		if (xin.requires_grad) dxp.assign(g.padded_positions() * Cin, Real(0));
		const int chunk = g.rows_per_chunk();
		// Output gradient laid out on the padded width; padding columns stay zero.
		std::vector<Real> gp(std::size_t(chunk) * Wp * Cout, Real(0));
		for (int r0 = 0; r0 < g.height; r0 += chunk) {
			const int r1 = std::min(g.height, r0 + chunk);
			const std::size_t q0 = std::size_t(r0) * Wp, positions = std::size_t(r1 - r0) * Wp;
			for (int y = r0; y < r1; ++y) {
				std::copy_n(grad + std::size_t(y) * g.width * Cout, std::size_t(g.width) * Cout,
				            gp.begin() + std::size_t(y - r0) * Wp * Cout);
			}
			for (int ky = 0; ky < g.ksize; ++ky) {
				for (int kx = 0; kx < g.ksize; ++kx) {
					const std::size_t tap = std::size_t(ky * g.ksize + kx) * Cin * Cout;
					const std::size_t at = (q0 + g.tap_offset(ky, kx)) * Cin;
					if (wt.requires_grad) {
						detail::gemm(true, false, Cin, Cout, int(positions), Real(1), xp.data() + at, Cin, gp.data(), Cout,
						             Real(1), wt.grad_buffer().data() + tap, Cout);
					}
					if (xin.requires_grad) {
						detail::gemm(false, true, int(positions), Cin, Cout, Real(1), gp.data(), Cout, wt.data.data() + tap,
						             Cout, Real(1), dxp.data() + at, Cin);
					}
				}
			}
		}
		if (xin.requires_grad) {
			auto dx = xin.grad_buffer();
			for (int y = 0; y < g.height; ++y) {
				const Real* src = dxp.data() + ((y + pad) * Wp + pad) * Cin;
				Real* dst = dx.data() + std::size_t(y) * g.width * Cin;
				for (std::size_t i = 0; i < std::size_t(g.width) * Cin; ++i) dst[i] += src[i];
			}
		}
	};

	return Tensor<Real>::from_op({input.dim(0), input.dim(1), ws[3]}, std::move(out), "conv2d",
	                             {input, weights, bias}, std::move(backward));
}

// Per-channel sums over N rows of a row-major [N, C] array. Rows are summed in
// short blocks in the working precision, then accumulated in double.
template <typename Real, typename F>
std::vector<double> channel_sums(std::size_t N, std::size_t C, F&& term)
{
	constexpr std::size_t kBlock = 256;
	std::vector<double> total(C, 0.0);
	std::vector<Real> part(C);
	for (std::size_t i0 = 0; i0 < N; i0 += kBlock) {
		std::fill(part.begin(), part.end(), Real(0));
		const std::size_t i1 = std::min(N, i0 + kBlock);
		for (std::size_t i = i0; i < i1; ++i)
			for (std::size_t c = 0; c < C; ++c) part[c] += term(i * C + c, c);
		for (std::size_t c = 0; c < C; ++c) total[c] += double(part[c]);
	}
	return total;
}

template <typename Real>
Tensor<Real> instance_norm(const Tensor<Real>& input, const Tensor<Real>& gain, const Tensor<Real>& shift,
                           double eps)
{
	require(input.rank() >= 1, "instance_norm: input must have a channel axis");
	const std::size_t C = input.shape().back();
	require(gain.rank() == 1 && gain.dim(0) == C, "instance_norm: gain shape " + shape_string(gain.shape()) +
	                                                 " does not match " + std::to_string(C) + " channels");
	require(shift.rank() == 1 && shift.dim(0) == C, "instance_norm: shift shape " + shape_string(shift.shape()) +
	                                                   " does not match " + std::to_string(C) + " channels");
	const std::size_t N = input.size() / C;
	require(N >= 1, "instance_norm: empty spatial extent");

	const Real* x = input.data().data();
	const std::vector<double> sums = channel_sums<Real>(N, C, [x](std::size_t j, std::size_t) { return x[j]; });
	std::vector<Real> mean(C), inv_std(C);
	for (std::size_t c = 0; c < C; ++c) mean[c] = Real(sums[c] / double(N));
	const std::vector<double> sq = channel_sums<Real>(N, C, [x, &mean](std::size_t j, std::size_t c) {
		const Real d = x[j] - mean[c];
		return d * d;
	});
	for (std::size_t c = 0; c < C; ++c) inv_std[c] = Real(1.0 / std::sqrt(sq[c] / double(N) + eps));

	// Subtracting the mean first keeps constant channels exactly at the shift.
	std::vector<Real> scale(C), out(input.size());
	const Real* offset = shift.data().data();
	for (std::size_t c = 0; c < C; ++c) scale[c] = gain.data()[c] * inv_std[c];
	for (std::size_t i = 0; i < N; ++i)
		for (std::size_t c = 0; c < C; ++c) out[i * C + c] = (x[i * C + c] - mean[c]) * scale[c] + offset[c];

	auto backward = [C, N, mean = std::move(mean), inv_std = std::move(inv_std)](detail::Node<Real>& self) {
		auto& xin = *self.parents[0];
		auto& gn = *self.parents[1];
		auto& sh = *self.parents[2];
		const Real* x = xin.data.data();
		const Real* g = self.grad.data();
		auto xhat = [&](std::size_t j, std::size_t c) { return (x[j] - mean[c]) * inv_std[c]; };
		const std::vector<double> sum_g = channel_sums<Real>(N, C, [g](std::size_t j, std::size_t) { return g[j]; });
		const std::vector<double> sum_g_xh =
			channel_sums<Real>(N, C, [g, &xhat](std::size_t j, std::size_t c) { return g[j] * xhat(j, c); });
		if (gn.requires_grad) {
			auto dg = gn.grad_buffer();
			for (std::size_t c = 0; c < C; ++c) dg[c] += Real(sum_g_xh[c]);
		}
		if (sh.requires_grad) {
			auto ds = sh.grad_buffer();
			for (std::size_t c = 0; c < C; ++c) ds[c] += Real(sum_g[c]);
		}
		if (xin.requires_grad) {
			// dx = inv_std * gain * (g - mean(g) - xhat * mean(g * xhat))
			const double n = double(N);
			std::vector<Real> a(C), b(C), k(C);
			for (std::size_t c = 0; c < C; ++c) {
				const double s = double(inv_std[c]) * double(gn.data[c]);
				a[c] = Real(s);
				b[c] = Real(s * sum_g[c] / n);
				k[c] = Real(s * sum_g_xh[c] / n);
			}
			auto dx = xin.grad_buffer();
			for (std::size_t i = 0; i < N; ++i)
				for (std::size_t c = 0; c < C; ++c) {
					const std::size_t j = i * C + c;
					dx[j] += a[c] * g[j] - b[c] - xhat(j, c) * k[c];
				}
		}
	};

	return Tensor<Real>::from_op(input.shape(), std::move(out), "instance_norm", {input, gain, shift},
	                             std::move(backward));
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& input)
{
	const auto x = input.data();
	std::vector<Real> out(x.size());
	std::transform(x.begin(), x.end(), out.begin(), [](Real v) { return v > Real(0) ? v : Real(0); });
	auto backward = [](detail::Node<Real>& self) {
		auto dx = self.parents[0]->grad_buffer();
		const Real* y = self.data.data();
		const Real* g = self.grad.data();
		for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += y[i] > Real(0) ? g[i] : Real(0);
	};
	return Tensor<Real>::from_op(input.shape(), std::move(out), "relu", {input}, std::move(backward));
}

template <typename Real>
Tensor<Real> softmax_channels(const Tensor<Real>& input)
{
	require(input.rank() >= 1 && input.shape().back() >= 1, "softmax_channels: needs a non-empty channel axis");
	const std::size_t C = input.shape().back();
	const std::size_t P = input.size() / C;
	const auto x = input.data();
	std::vector<Real> out(x.size());
	for (std::size_t p = 0; p < P; ++p) {
		const Real* in = x.data() + p * C;
		Real* o = out.data() + p * C;
		const Real peak = *std::max_element(in, in + C);
		double total = 0.0;
		for (std::size_t c = 0; c < C; ++c) {
			const double e = std::exp(double(in[c] - peak));
			o[c] = Real(e);
			total += e;
		}
		for (std::size_t c = 0; c < C; ++c) o[c] = Real(o[c] / total);
	}
	auto backward = [C, P](detail::Node<Real>& self) {
		auto dx = self.parents[0]->grad_buffer();
		for (std::size_t p = 0; p < P; ++p) {
			const Real* y = self.data.data() + p * C;
			const Real* g = self.grad.data() + p * C;
			double dot = 0.0;
			for (std::size_t c = 0; c < C; ++c) dot += double(g[c]) * y[c];
			for (std::size_t c = 0; c < C; ++c) dx[p * C + c] += Real(y[c] * (g[c] - dot));
		}
	};
	return Tensor<Real>::from_op(input.shape(), std::move(out), "softmax_channels", {input}, std::move(backward));
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& input)
{
	double total = 0.0;
	for (Real v : input.data()) total += v;
	auto backward = [](detail::Node<Real>& self) {
		for (auto& d : self.parents[0]->grad_buffer()) d += self.grad[0];
	};
	return Tensor<Real>::from_op({}, {Real(total)}, "sum", {input}, std::move(backward));
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b)
{
	require(a.shape() == b.shape(), "add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
	std::vector<Real> out(a.size());
	for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
	auto backward = [](detail::Node<Real>& self) {
		for (auto& parent : self.parents) {
			if (!parent->requires_grad) continue;
			auto d = parent->grad_buffer();
			for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
		}
	};
	return Tensor<Real>::from_op(a.shape(), std::move(out), "add", {a, b}, std::move(backward));
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b)
{
	require(a.shape() == b.shape(), "mul: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
	std::vector<Real> out(a.size());
	for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
	auto backward = [](detail::Node<Real>& self) {
		auto& pa = *self.parents[0];
		auto& pb = *self.parents[1];
		if (pa.requires_grad) {
			auto d = pa.grad_buffer();
			for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * pb.data[i];
		}
		if (pb.requires_grad) {
			auto d = pb.grad_buffer();
			for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * pa.data[i];
		}
	};
	return Tensor<Real>::from_op(a.shape(), std::move(out), "mul", {a, b}, std::move(backward));
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& input, double factor)
{
	std::vector<Real> out(input.size());
	for (std::size_t i = 0; i < out.size(); ++i) out[i] = Real(input.data()[i] * factor);
	auto backward = [factor](detail::Node<Real>& self) {
		auto d = self.parents[0]->grad_buffer();
		for (std::size_t i = 0; i < d.size(); ++i) d[i] += Real(self.grad[i] * factor);
	};
	return Tensor<Real>::from_op(input.shape(), std::move(out), "scale", {input}, std::move(backward));
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& input, Shape shape)
{
	require(shape_size(shape) == input.size(),
	        "reshape: cannot view " + shape_string(input.shape()) + " as " + shape_string(shape));
	std::vector<Real> out(input.data().begin(), input.data().end());
	auto backward = [](detail::Node<Real>& self) {
		auto d = self.parents[0]->grad_buffer();
		for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
	};
	return Tensor<Real>::from_op(std::move(shape), std::move(out), "reshape", {input}, std::move(backward));
}

#define SAUVOLANET_INSTANTIATE_OPS(Real)                                                                           \
	template Tensor<Real> conv2d(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&, int);           \
	template Tensor<Real> instance_norm(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&, double); \
	template Tensor<Real> relu(const Tensor<Real>&);                                                            \
	template Tensor<Real> softmax_channels(const Tensor<Real>&);                                                \
	template Tensor<Real> sum(const Tensor<Real>&);                                                             \
	template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                                        \
	template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);                                        \
	template Tensor<Real> scale(const Tensor<Real>&, double);                                                   \
	template Tensor<Real> reshape(const Tensor<Real>&, Shape);

SAUVOLANET_INSTANTIATE_OPS(float)
SAUVOLANET_INSTANTIATE_OPS(double)

} // namespace sauvolanet::ops
