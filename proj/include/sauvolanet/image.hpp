#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sauvolanet {

// Grayscale page with intensities normalized to [0, 1].
struct GrayImage {
	std::size_t height = 0;
	std::size_t width = 0;
	std::vector<double> pixels;

	GrayImage() = default;
	GrayImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

	double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
	double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
	std::size_t size() const { return pixels.size(); }
	bool empty() const { return pixels.empty(); }
};

enum Label : std::int8_t { kInk = -1, kBackground = 1 };

// Two-class map: -1 foreground ink, +1 background.
struct BinaryMap {
	std::size_t height = 0;
	std::size_t width = 0;
	std::vector<std::int8_t> labels;

	BinaryMap() = default;
	BinaryMap(std::size_t h, std::size_t w, std::int8_t fill = kBackground) : height(h), width(w), labels(h * w, fill) {}

	std::int8_t& at(std::size_t r, std::size_t c) { return labels[r * width + c]; }
	std::int8_t at(std::size_t r, std::size_t c) const { return labels[r * width + c]; }
	std::size_t size() const { return labels.size(); }
	bool operator==(const BinaryMap&) const = default;
};

struct ThresholdMap {
	std::size_t height = 0;
	std::size_t width = 0;
	std::vector<double> values;

	ThresholdMap() = default;
	ThresholdMap(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}

	double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

// H x W x N, channel-last.
struct ThresholdStack {
	std::size_t height = 0;
	std::size_t width = 0;
	std::size_t channels = 0;
	std::vector<double> values;

	double at(std::size_t r, std::size_t c, std::size_t n) const { return values[(r * width + c) * channels + n]; }
	ThresholdMap channel(std::size_t n) const;
};

inline ThresholdMap ThresholdStack::channel(std::size_t n) const
{
	ThresholdMap out(height, width);
	for (std::size_t i = 0; i < height * width; ++i) out.values[i] = values[i * channels + n];
	return out;
}

template <typename A, typename B>
void require_same_extent(const A& a, const B& b, const char* what)
{
	if (a.height != b.height || a.width != b.width) {
		throw std::invalid_argument(std::string(what) + ": extent mismatch " + std::to_string(a.height) + "x" +
		                            std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
		                            std::to_string(b.width));
	}
}

} // namespace sauvolanet
