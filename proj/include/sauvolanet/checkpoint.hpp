#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sauvolanet/model.hpp"
#include "sauvolanet/optim.hpp"

namespace sauvolanet {

// Binary layout is documented in docs/checkpoint_format.md.
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'S', 'V', 'N', 'E', 'T', 'C', 'K', 'P'};

struct NamedTensor {
	std::string name;
	Shape shape;
	bool trainable = true;
	std::vector<double> values;
};

struct OptimizerSnapshot {
	std::uint64_t step_count = 0;
	AdamConfig config;
	// One entry per model tensor, same order as ModelCheckpoint::tensors.
	std::vector<std::vector<double>> first_moment;
	std::vector<std::vector<double>> second_moment;
};

struct TrainingMetadata {
	std::uint64_t step_count = 0;
	std::uint64_t seed = 0;
	std::uint64_t loss_count = 0;
	double final_loss = 0.0;
	std::uint32_t loss_digest = 0; // CRC-32 of the little-endian f64 loss history
};

struct ModelCheckpoint {
	std::uint32_t format_version = kCheckpointVersion;
	std::uint32_t value_bytes = 4; // 4: f32 values, 8: f64 values
	WindowSet window_set;
	std::vector<NamedTensor> tensors;
	std::optional<OptimizerSnapshot> optimizer;
	TrainingMetadata metadata;
};

class CheckpointError : public std::runtime_error {
public:
	enum class Kind { io, bad_magic, version_mismatch, truncated, checksum, shape_mismatch };

	CheckpointError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
	Kind kind() const { return kind_; }

private:
	Kind kind_;
};

std::uint32_t loss_history_digest(const std::vector<double>& losses);

template <typename Real>
ModelCheckpoint make_checkpoint(const SauvolaNet<Real>& model, const AdamState<Real>* optimizer = nullptr,
                                const TrainingMetadata& metadata = {});

// Copies checkpoint values into `model` (and `optimizer` when both are present).
// Throws CheckpointError(shape_mismatch) if window sets or tensor shapes differ.
template <typename Real>
void restore_checkpoint(const ModelCheckpoint& checkpoint, SauvolaNet<Real>& model,
                        AdamState<Real>* optimizer = nullptr);

std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& checkpoint);
ModelCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// Writes through a temporary file and renames it into place.
void write_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);
ModelCheckpoint read_checkpoint(const std::filesystem::path& path);

template <typename Real>
void save_checkpoint(const SauvolaNet<Real>& model, const std::filesystem::path& path);

template <typename Real>
SauvolaNet<Real> load_checkpoint(const std::filesystem::path& path, const WindowSet* expected = nullptr);

} // namespace sauvolanet
