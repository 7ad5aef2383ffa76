// Checkpoint container, version 1. All integers and doubles little-endian.
//
//   offset  size  field
//   0       8     magic "BTHKMLP\n"
//   8       4     u32 format version (1)
//   12      4     u32 layer count L
//   16      12*L  per layer: u32 in_dim, u32 out_dim, u8 activation
//                 (0 identity, 1 relu), u8 residual (0/1), u16 reserved (0)
//   ...     8     u64 parameter count P
//   ...     8*P   f64 parameters; for each layer in order, weights
//                 (out_dim x in_dim, row-major) then biases (out_dim)
//
// Nothing may follow the parameter block.

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "bthick/errors.hpp"
#include "bthick/model.hpp"

namespace bthick {

namespace {

constexpr std::array<unsigned char, 8> kMagic = {'B', 'T', 'H', 'K', 'M', 'L', 'P', '\n'};

template <typename T>
void put(std::vector<unsigned char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* field) {
    if (remaining() < sizeof(T))
      throw CheckpointError(CheckpointError::Kind::kMalformed,
                            std::string("checkpoint truncated while reading ") + field);
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b)
      bits |= static_cast<std::uint64_t>(bytes_[pos_ + b]) << (8 * b);
    pos_ += sizeof(T);
    T value;
    if constexpr (sizeof(T) == 8) {
      std::memcpy(&value, &bits, 8);
    } else {
      value = static_cast<T>(bits);
    }
    return value;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

[[noreturn]] void fail(CheckpointError::Kind kind, const std::string& what) {
  throw CheckpointError(kind, "checkpoint: " + what);
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const MlpModel& model) {
  std::vector<unsigned char> out(kMagic.begin(), kMagic.end());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.num_layers()));
  for (const auto& l : model.layers()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.spec.in_dim));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.spec.out_dim));
    put<std::uint8_t>(out, l.spec.activation == Activation::kRelu ? 1 : 0);
    put<std::uint8_t>(out, l.spec.residual ? 1 : 0);
    put<std::uint16_t>(out, 0);
  }
  put<std::uint64_t>(out, model.parameter_count());
  for (const auto& l : model.layers()) {
    for (double v : l.weights.values()) put<double>(out, v);
    for (double v : l.bias) put<double>(out, v);
  }
  return out;
}

MlpModel decode_checkpoint(std::span<const unsigned char> bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    fail(Kind::kMalformed, "missing magic header");
  Reader in(bytes.subspan(kMagic.size()));
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    fail(Kind::kVersion, "unsupported format version " + std::to_string(version) + " (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  const auto count = in.get<std::uint32_t>("layer count");
  if (count == 0) fail(Kind::kShape, "no layers");
  if (static_cast<std::size_t>(count) * 12 > in.remaining()) fail(Kind::kMalformed, "truncated layer table");

  std::vector<LayerSpec> specs;
  std::uint64_t expected = 0;
  for (std::uint32_t k = 0; k < count; ++k) {
    LayerSpec s;
    s.in_dim = in.get<std::uint32_t>("in_dim");
    s.out_dim = in.get<std::uint32_t>("out_dim");
    const auto act = in.get<std::uint8_t>("activation");
    const auto res = in.get<std::uint8_t>("residual");
    const auto reserved = in.get<std::uint16_t>("reserved");
    if (act > 1 || res > 1 || reserved != 0)
      fail(Kind::kMalformed, "invalid flags in layer " + std::to_string(k));
    s.activation = act == 1 ? Activation::kRelu : Activation::kIdentity;
    s.residual = res == 1;
    if (s.in_dim == 0 || s.out_dim == 0) fail(Kind::kShape, "zero dimension in layer " + std::to_string(k));
    if (s.residual && s.in_dim != s.out_dim)
      fail(Kind::kShape, "residual layer " + std::to_string(k) + " with in_dim != out_dim");
    if (k > 0 && specs.back().out_dim != s.in_dim)
      fail(Kind::kShape, "layer " + std::to_string(k) + " input does not match previous output");
    expected += static_cast<std::uint64_t>(s.in_dim) * s.out_dim + s.out_dim;
    specs.push_back(s);
  }
  if (specs.back().out_dim < 2) fail(Kind::kShape, "final layer has fewer than two classes");
  const auto declared = in.get<std::uint64_t>("parameter count");
  if (declared != expected)
    fail(Kind::kShape, "declared parameter count " + std::to_string(declared) +
                           " does not match layer dimensions (" + std::to_string(expected) + ")");
  if (in.remaining() != declared * 8)
    fail(Kind::kMalformed, "parameter block holds " + std::to_string(in.remaining()) +
                               " bytes, expected " + std::to_string(declared * 8));

  MlpModel model(specs);
  for (auto& l : model.mutable_layers()) {
    for (double& v : l.weights.values()) v = in.get<double>("weight");
    for (double& v : l.bias) v = in.get<double>("bias");
  }
  if (!model.all_finite()) fail(Kind::kMalformed, "non-finite parameter");
  return model;
}

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "write failed: " + path.string());
}

MlpModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace bthick
