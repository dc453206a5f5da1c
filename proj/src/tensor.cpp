#include "sauvolanet/tensor.hpp"

#include <algorithm>
#include <mutex>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace sauvolanet {

std::size_t shape_size(const Shape& shape)
{
	return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape)
{
	std::ostringstream out;
	out << '[';
	for (std::size_t i = 0; i < shape.size(); ++i) {
		if (i) out << 'x';
		out << shape[i];
	}
	out << ']';
	return out.str();
}

namespace {

thread_local bool t_grad_enabled = true;

std::mutex g_fault_mutex;
std::string g_fault_op;

} // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

namespace debug {

void set_gradient_fault(std::string_view op)
{
	std::lock_guard lock(g_fault_mutex);
	g_fault_op = std::string(op);
}

std::string gradient_fault()
{
	std::lock_guard lock(g_fault_mutex);
	return g_fault_op;
}

} // namespace debug

template <typename Real>
std::span<Real> detail::Node<Real>::grad_buffer()
{
	if (grad.empty()) grad.assign(data.size(), Real(0));
	return grad;
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> data, bool requires_grad)
{
	if (shape_size(shape) != data.size()) {
		throw ShapeError("tensor shape " + shape_string(shape) + " does not match " +
		                 std::to_string(data.size()) + " values");
	}
	node_ = std::make_shared<Node>();
	node_->shape = std::move(shape);
	node_->data = std::move(data);
	node_->requires_grad = requires_grad;
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad)
{
	return full(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value, bool requires_grad)
{
	const std::size_t n = shape_size(shape);
	return Tensor(std::move(shape), std::vector<Real>(n, value), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requires_grad)
{
	return Tensor(Shape{}, std::vector<Real>{value}, requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::from_op(Shape shape, std::vector<Real> data, std::string op,
                                   const std::vector<Tensor>& parents, BackwardFn backward)
{
	Tensor out(std::move(shape), std::move(data), false);
	out.node_->op = std::move(op);
	if (!grad_enabled()) return out;
	const bool any = std::any_of(parents.begin(), parents.end(),
	                             [](const Tensor& p) { return p.defined() && p.requires_grad(); });
	if (!any) return out;
	out.node_->requires_grad = true;
	out.node_->parents.reserve(parents.size());
	for (const auto& p : parents) out.node_->parents.push_back(p.node_);
	out.node_->backward = std::move(backward);
	return out;
}

template <typename Real>
const Shape& Tensor<Real>::shape() const
{
	return node().shape;
}

template <typename Real>
std::size_t Tensor<Real>::dim(std::size_t axis) const
{
	const auto& s = shape();
	if (axis >= s.size()) {
		throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
	}
	return s[axis];
}

template <typename Real>
std::size_t Tensor<Real>::size() const
{
	return node().data.size();
}

template <typename Real>
std::span<const Real> Tensor<Real>::data() const
{
	return node().data;
}

template <typename Real>
std::span<Real> Tensor<Real>::data_mut()
{
	return node().data;
}

template <typename Real>
Real Tensor<Real>::item() const
{
	if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
	return node().data[0];
}

template <typename Real>
bool Tensor<Real>::requires_grad() const
{
	return node().requires_grad;
}

template <typename Real>
void Tensor<Real>::set_requires_grad(bool flag)
{
	if (!node().is_leaf()) throw std::logic_error("requires_grad can only be set on leaf tensors");
	node().requires_grad = flag;
}

template <typename Real>
bool Tensor<Real>::has_grad() const
{
	return !node().grad.empty();
}

template <typename Real>
std::span<const Real> Tensor<Real>::grad() const
{
	return node().grad;
}

template <typename Real>
std::span<Real> Tensor<Real>::grad_mut()
{
	return node().grad_buffer();
}

template <typename Real>
void Tensor<Real>::zero_grad()
{
	node().grad.clear();
	node().grad.shrink_to_fit();
}

template <typename Real>
void Tensor<Real>::backward() const
{
	if (size() != 1 || !shape().empty()) {
		throw ShapeError("backward() requires a scalar loss, got " + shape_string(shape()));
	}
	if (!requires_grad()) throw std::logic_error("backward() on a tensor that does not require grad");

	// Iterative post-order DFS gives a topological order (parents first).
	std::vector<Node*> order;
	std::unordered_set<Node*> visited;
	std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
	visited.insert(node_.get());
	while (!stack.empty()) {
		auto& [n, next] = stack.back();
		if (next < n->parents.size()) {
			Node* p = n->parents[next++].get();
			if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
		} else {
			order.push_back(n);
			stack.pop_back();
		}
	}

	for (Node* n : order) {
		if (!n->is_leaf()) n->grad.assign(n->data.size(), Real(0));
	}
	if (node_->is_leaf()) {
		node_->grad_buffer()[0] += Real(1);
		return;
	}
	node_->grad[0] = Real(1);

	const std::string fault = debug::gradient_fault();
	for (auto it = order.rbegin(); it != order.rend(); ++it) {
		Node* n = *it;
		if (n->is_leaf()) continue;
		if (!fault.empty() && n->op == fault) {
			for (auto& g : n->grad) g *= Real(1.25);
		}
		n->backward(*n);
	}
	// Intermediate buffers are scratch; release them.
	for (Node* n : order) {
		if (!n->is_leaf()) {
			n->grad.clear();
			n->grad.shrink_to_fit();
		}
	}
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const
{
	return Tensor(shape(), node().data, false);
}

template <typename Real>
const std::string& Tensor<Real>::op_name() const
{
	return node().op;
}

template <typename Real>
typename Tensor<Real>::Node& Tensor<Real>::node() const
{
	if (!node_) throw std::logic_error("use of an undefined tensor");
	return *node_;
}

template struct detail::Node<float>;
template struct detail::Node<double>;
template class Tensor<float>;
template class Tensor<double>;

} // namespace sauvolanet
