#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sauvolanet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
	using std::invalid_argument::invalid_argument;
};

namespace detail {

template <typename Real>
struct Node {
	Shape shape;
	std::vector<Real> data;
	std::vector<Real> grad; // empty until something accumulates into it
	bool requires_grad = false;
	std::string op = "leaf";
	std::vector<std::shared_ptr<Node>> parents;
	// Reads this->grad and accumulates into the parents that require grad.
	std::function<void(Node&)> backward;

	bool is_leaf() const { return !backward; }
	std::span<Real> grad_buffer();
};

} // namespace detail

// Dense row-major tensor with eager, taped reverse-mode differentiation.
// Copies share the underlying node; use detach() for a value copy.
template <typename Real>
class Tensor {
public:
	using value_type = Real;
	using Node = detail::Node<Real>;
	using BackwardFn = std::function<void(Node&)>;

	Tensor() = default;
	Tensor(Shape shape, std::vector<Real> data, bool requires_grad = false);

	static Tensor zeros(Shape shape, bool requires_grad = false);
	static Tensor full(Shape shape, Real value, bool requires_grad = false);
	static Tensor scalar(Real value, bool requires_grad = false);

	// Builds an op result. When grad mode is off or no parent requires grad
	// the result is a plain constant and `backward` is dropped.
	static Tensor from_op(Shape shape, std::vector<Real> data, std::string op,
	                      const std::vector<Tensor>& parents, BackwardFn backward);

	bool defined() const { return static_cast<bool>(node_); }
	const Shape& shape() const;
	std::size_t rank() const { return shape().size(); }
	std::size_t dim(std::size_t axis) const;
	std::size_t size() const;

	std::span<const Real> data() const;
	// Mutable view; intended for leaves (optimizer updates, perturbation in checks).
	std::span<Real> data_mut();
	Real item() const;

	bool requires_grad() const;
	void set_requires_grad(bool flag);
	bool has_grad() const;
	std::span<const Real> grad() const;
	std::span<Real> grad_mut();
	void zero_grad();

	// Reverse sweep from a scalar. Leaf gradients accumulate across calls.
	void backward() const;

	Tensor detach() const;
	const std::string& op_name() const;
	Node& node() const;

private:
	explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
	std::shared_ptr<Node> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

bool grad_enabled();

// Disables graph construction on the current thread for its lifetime.
class NoGradGuard {
public:
	NoGradGuard();
	~NoGradGuard();
	NoGradGuard(const NoGradGuard&) = delete;
	NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
	bool previous_;
};

namespace debug {
// Mutation hook for verifying the gradient checker: every backward rule of the
// named op sees its incoming gradient scaled by 1.25. Empty string disables.
void set_gradient_fault(std::string_view op);
std::string gradient_fault();
} // namespace debug

} // namespace sauvolanet
