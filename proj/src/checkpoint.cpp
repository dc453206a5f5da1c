#include "sauvolanet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace sauvolanet {

namespace {

using Kind = CheckpointError::Kind;

constexpr std::size_t kHeaderBytes = 8 + 4 + 8;

class Writer {
public:
	void u8(std::uint8_t v) { bytes_.push_back(v); }
	void u16(std::uint16_t v) { put(v, 2); }
	void u32(std::uint32_t v) { put(v, 4); }
	void u64(std::uint64_t v) { put(v, 8); }
	void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
	void value(double v, std::uint32_t width)
	{
		if (width == 4) u32(std::bit_cast<std::uint32_t>(float(v)));
		else f64(v);
	}
	void raw(const void* data, std::size_t n)
	{
		const auto* p = static_cast<const std::uint8_t*>(data);
		bytes_.insert(bytes_.end(), p, p + n);
	}
	std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
	void put(std::uint64_t v, int n)
	{
		for (int i = 0; i < n; ++i) bytes_.push_back(std::uint8_t(v >> (8 * i)));
	}
	std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
	Reader(const std::vector<std::uint8_t>& bytes, std::size_t begin, std::size_t end)
		: bytes_(bytes), pos_(begin), end_(end)
	{
	}
	std::uint8_t u8() { return std::uint8_t(get(1)); }
	std::uint16_t u16() { return std::uint16_t(get(2)); }
	std::uint32_t u32() { return std::uint32_t(get(4)); }
	std::uint64_t u64() { return get(8); }
	double f64() { return std::bit_cast<double>(u64()); }
	double value(std::uint32_t width)
	{
		if (width == 4) return double(std::bit_cast<float>(u32()));
		return f64();
	}
	std::string str(std::size_t n)
	{
		need(n);
		std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
		pos_ += n;
		return s;
	}
	std::size_t remaining() const { return end_ - pos_; }

private:
	void need(std::size_t n) const
	{
		if (end_ - pos_ < n) throw CheckpointError(Kind::truncated, "checkpoint: unexpected end of data");
	}
	std::uint64_t get(int n)
	{
		need(std::size_t(n));
		std::uint64_t v = 0;
		for (int i = 0; i < n; ++i) v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
		pos_ += std::size_t(n);
		return v;
	}
	const std::vector<std::uint8_t>& bytes_;
	std::size_t pos_;
	std::size_t end_;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n)
{
	uLong crc = crc32(0L, Z_NULL, 0);
	// zlib takes uInt lengths; feed large buffers in pieces.
	while (n > 0) {
		const uInt piece = uInt(std::min<std::size_t>(n, 1u << 30));
		crc = crc32(crc, data, piece);
		data += piece;
		n -= piece;
	}
	return std::uint32_t(crc);
}

} // namespace

std::uint32_t loss_history_digest(const std::vector<double>& losses)
{
	Writer w;
	for (double v : losses) w.f64(v);
	return crc_of(w.bytes().data(), w.bytes().size());
}

template <typename Real>
ModelCheckpoint make_checkpoint(const SauvolaNet<Real>& model, const AdamState<Real>* optimizer,
                                const TrainingMetadata& metadata)
{
	ModelCheckpoint ckpt;
	ckpt.value_bytes = sizeof(Real);
	ckpt.window_set = model.window_set();
	ckpt.metadata = metadata;
	const auto& entries = model.params().entries();
	for (const auto& p : entries) {
		ckpt.tensors.push_back(
			{p.name, p.value.shape(), p.trainable, std::vector<double>(p.value.data().begin(), p.value.data().end())});
	}
	if (optimizer) {
		OptimizerSnapshot snap;
		snap.step_count = optimizer->step_count;
		snap.config = optimizer->config;
		for (std::size_t i = 0; i < entries.size(); ++i) {
			const bool has = i < optimizer->first_moment.size() && !optimizer->first_moment[i].empty();
			snap.first_moment.push_back(has ? optimizer->first_moment[i] : std::vector<double>(entries[i].value.size()));
			snap.second_moment.push_back(has ? optimizer->second_moment[i]
			                                 : std::vector<double>(entries[i].value.size()));
		}
		ckpt.optimizer = std::move(snap);
	}
	return ckpt;
}

template <typename Real>
void restore_checkpoint(const ModelCheckpoint& checkpoint, SauvolaNet<Real>& model, AdamState<Real>* optimizer)
{
	if (!(checkpoint.window_set == model.window_set())) {
		throw CheckpointError(Kind::shape_mismatch, "checkpoint window set does not match the model");
	}
	auto& entries = model.params().entries();
	if (checkpoint.tensors.size() != entries.size()) {
		throw CheckpointError(Kind::shape_mismatch, "checkpoint holds " + std::to_string(checkpoint.tensors.size()) +
		                                                " tensors, model expects " + std::to_string(entries.size()));
	}
	for (std::size_t i = 0; i < entries.size(); ++i) {
		const auto& src = checkpoint.tensors[i];
		auto& dst = entries[i];
		if (src.name != dst.name || src.shape != dst.value.shape()) {
			throw CheckpointError(Kind::shape_mismatch, "checkpoint tensor " + src.name + shape_string(src.shape) +
			                                                " does not match model tensor " + dst.name +
			                                                shape_string(dst.value.shape()));
		}
	}
	for (std::size_t i = 0; i < entries.size(); ++i) {
		const auto& src = checkpoint.tensors[i];
		auto data = entries[i].value.data_mut();
		for (std::size_t j = 0; j < data.size(); ++j) data[j] = Real(src.values[j]);
		model.params().set_trainable(entries[i].name, src.trainable);
	}
	if (optimizer && checkpoint.optimizer) {
		optimizer->step_count = checkpoint.optimizer->step_count;
		optimizer->config = checkpoint.optimizer->config;
		optimizer->first_moment = checkpoint.optimizer->first_moment;
		optimizer->second_moment = checkpoint.optimizer->second_moment;
	}
}

std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& ckpt)
{
	if (ckpt.value_bytes != 4 && ckpt.value_bytes != 8) {
		throw std::invalid_argument("checkpoint value width must be 4 or 8 bytes");
	}
	Writer body;
	body.u32(ckpt.value_bytes);
	body.u32(std::uint32_t(ckpt.window_set.size()));
	for (int w : ckpt.window_set.windows) body.u32(std::uint32_t(w));
	body.u32(std::uint32_t(ckpt.tensors.size()));
	for (const auto& t : ckpt.tensors) {
		body.u16(std::uint16_t(t.name.size()));
		body.raw(t.name.data(), t.name.size());
		body.u8(t.trainable ? 1 : 0);
		body.u32(std::uint32_t(t.shape.size()));
		for (auto d : t.shape) body.u32(std::uint32_t(d));
		for (double v : t.values) body.value(v, ckpt.value_bytes);
	}
	body.u8(ckpt.optimizer ? 1 : 0);
	if (ckpt.optimizer) {
		const auto& o = *ckpt.optimizer;
		body.u64(o.step_count);
		body.f64(o.config.learning_rate);
		body.f64(o.config.beta1);
		body.f64(o.config.beta2);
		body.f64(o.config.epsilon);
		for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
			for (double v : o.first_moment.at(i)) body.f64(v);
			for (double v : o.second_moment.at(i)) body.f64(v);
		}
	}
	const auto& m = ckpt.metadata;
	body.u64(m.step_count);
	body.u64(m.seed);
	body.u64(m.loss_count);
	body.f64(m.final_loss);
	body.u32(m.loss_digest);

	Writer out;
	out.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
	out.u32(ckpt.format_version);
	out.u64(body.bytes().size());
	out.raw(body.bytes().data(), body.bytes().size());
	out.u32(crc_of(out.bytes().data(), out.bytes().size()));
	return std::move(out.bytes());
}

ModelCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes)
{
	if (bytes.size() < sizeof(kCheckpointMagic)) throw CheckpointError(Kind::truncated, "checkpoint: file too short");
	if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
		throw CheckpointError(Kind::bad_magic, "checkpoint: not a SauvolaNet checkpoint (bad magic)");
	}
	if (bytes.size() < kHeaderBytes) throw CheckpointError(Kind::truncated, "checkpoint: header truncated");
	Reader header(bytes, sizeof(kCheckpointMagic), kHeaderBytes);
	ModelCheckpoint ckpt;
	ckpt.format_version = header.u32();
	if (ckpt.format_version != kCheckpointVersion) {
		throw CheckpointError(Kind::version_mismatch, "checkpoint: format version " +
		                                                  std::to_string(ckpt.format_version) + ", expected " +
		                                                  std::to_string(kCheckpointVersion));
	}
	const std::uint64_t body_length = header.u64();
	if (bytes.size() < kHeaderBytes + 4 || body_length > bytes.size() - kHeaderBytes - 4) {
		throw CheckpointError(Kind::truncated, "checkpoint: file is shorter than its declared length");
	}
	const std::size_t crc_at = kHeaderBytes + std::size_t(body_length);
	Reader trailer(bytes, crc_at, crc_at + 4);
	if (trailer.u32() != crc_of(bytes.data(), crc_at) || crc_at + 4 != bytes.size()) {
		throw CheckpointError(Kind::checksum, "checkpoint: checksum mismatch");
	}

	Reader in(bytes, kHeaderBytes, crc_at);
	ckpt.value_bytes = in.u32();
	if (ckpt.value_bytes != 4 && ckpt.value_bytes != 8) {
		throw CheckpointError(Kind::shape_mismatch, "checkpoint: unsupported value width");
	}
	const std::uint32_t n_windows = in.u32();
	for (std::uint32_t i = 0; i < n_windows; ++i) ckpt.window_set.windows.push_back(int(in.u32()));
	const std::uint32_t n_tensors = in.u32();
	for (std::uint32_t i = 0; i < n_tensors; ++i) {
		NamedTensor t;
		t.name = in.str(in.u16());
		t.trainable = in.u8() != 0;
		const std::uint32_t rank = in.u32();
		for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(in.u32());
		const std::size_t count = shape_size(t.shape);
		if (count > in.remaining() / ckpt.value_bytes) throw CheckpointError(Kind::truncated, "checkpoint: tensor data truncated");
		t.values.resize(count);
		for (auto& v : t.values) v = in.value(ckpt.value_bytes);
		ckpt.tensors.push_back(std::move(t));
	}
	if (in.u8() != 0) {
		OptimizerSnapshot o;
		o.step_count = in.u64();
		o.config.learning_rate = in.f64();
		o.config.beta1 = in.f64();
		o.config.beta2 = in.f64();
		o.config.epsilon = in.f64();
		for (const auto& t : ckpt.tensors) {
			std::vector<double> m(t.values.size()), v(t.values.size());
			for (auto& x : m) x = in.f64();
			for (auto& x : v) x = in.f64();
			o.first_moment.push_back(std::move(m));
			o.second_moment.push_back(std::move(v));
		}
		ckpt.optimizer = std::move(o);
	}
	auto& m = ckpt.metadata;
	m.step_count = in.u64();
	m.seed = in.u64();
	m.loss_count = in.u64();
	m.final_loss = in.f64();
	m.loss_digest = in.u32();
	if (in.remaining() != 0) throw CheckpointError(Kind::checksum, "checkpoint: trailing bytes in body");
	try {
		ckpt.window_set.validate();
	} catch (const std::invalid_argument& e) {
		throw CheckpointError(Kind::shape_mismatch, std::string("checkpoint: ") + e.what());
	}
	return ckpt;
}

void write_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path)
{
	const auto bytes = encode_checkpoint(checkpoint);
	auto tmp = path;
	tmp += ".tmp";
	{
		std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
		if (!out) throw CheckpointError(Kind::io, "cannot open " + tmp.string() + " for writing");
		out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
		out.flush();
		if (!out) {
			std::error_code ec;
			std::filesystem::remove(tmp, ec);
			throw CheckpointError(Kind::io, "failed writing " + tmp.string());
		}
	}
	std::error_code ec;
	std::filesystem::rename(tmp, path, ec);
	if (ec) {
		std::filesystem::remove(tmp, ec);
		throw CheckpointError(Kind::io, "cannot move checkpoint into place at " + path.string());
	}
}

ModelCheckpoint read_checkpoint(const std::filesystem::path& path)
{
	std::ifstream in(path, std::ios::binary);
	if (!in) throw CheckpointError(Kind::io, "cannot open checkpoint " + path.string());
	std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
	return decode_checkpoint(bytes);
}

template <typename Real>
void save_checkpoint(const SauvolaNet<Real>& model, const std::filesystem::path& path)
{
	write_checkpoint(make_checkpoint(model), path);
}

template <typename Real>
SauvolaNet<Real> load_checkpoint(const std::filesystem::path& path, const WindowSet* expected)
{
	const ModelCheckpoint ckpt = read_checkpoint(path);
	if (expected && !(*expected == ckpt.window_set)) {
		throw CheckpointError(Kind::shape_mismatch, "checkpoint window set does not match the requested one");
	}
	SauvolaNet<Real> model(ckpt.window_set);
	restore_checkpoint(ckpt, model);
	return model;
}

#define SAUVOLANET_INSTANTIATE_CKPT(Real)                                                                         \
	template ModelCheckpoint make_checkpoint(const SauvolaNet<Real>&, const AdamState<Real>*,                     \
	                                         const TrainingMetadata&);                                            \
	template void restore_checkpoint(const ModelCheckpoint&, SauvolaNet<Real>&, AdamState<Real>*);                \
	template void save_checkpoint(const SauvolaNet<Real>&, const std::filesystem::path&);                        \
	template SauvolaNet<Real> load_checkpoint(const std::filesystem::path&, const WindowSet*);

SAUVOLANET_INSTANTIATE_CKPT(float)
SAUVOLANET_INSTANTIATE_CKPT(double)

} // namespace sauvolanet
