#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "bthick/model.hpp"

namespace bthick {
namespace {

MlpModel sample_model() {
  RngStream rng(21);
  return MlpModel::he_init(residual_mlp_specs(5, 6, 3, 3), rng);
}

CheckpointError::Kind decode_kind(const std::vector<unsigned char>& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode succeeded";
  return CheckpointError::Kind::kIo;
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto model = sample_model();
  EXPECT_EQ(decode_checkpoint(encode_checkpoint(model)), model);
  const auto path = std::filesystem::temp_directory_path() / "bthick_roundtrip.bthk";
  save_checkpoint(model, path);
  EXPECT_EQ(load_checkpoint(path), model);
  std::filesystem::remove(path);
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = encode_checkpoint(sample_model());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "BTHKMLP\n");
  EXPECT_EQ(bytes[8], 1);   // version, little-endian
  EXPECT_EQ(bytes[12], 3);  // layer count
  const std::size_t params = 5 * 6 + 6 + 6 * 6 + 6 + 6 * 3 + 3;
  EXPECT_EQ(bytes.size(), 8 + 4 + 4 + 12 * 3 + 8 + 8 * params);
}

TEST(Checkpoint, VersionMismatch) {
  auto bytes = encode_checkpoint(sample_model());
  bytes[8] = 2;
  EXPECT_EQ(decode_kind(bytes), CheckpointError::Kind::kVersion);
}

TEST(Checkpoint, TruncatedOrTrailingBytes) {
  auto bytes = encode_checkpoint(sample_model());
  auto shorter = bytes;
  shorter.resize(shorter.size() - 3);
  EXPECT_EQ(decode_kind(shorter), CheckpointError::Kind::kMalformed);
  bytes.push_back(0);
  EXPECT_EQ(decode_kind(bytes), CheckpointError::Kind::kMalformed);
  EXPECT_EQ(decode_kind({'n', 'o', 'p', 'e'}), CheckpointError::Kind::kMalformed);
}

TEST(Checkpoint, ShapeInconsistency) {
  auto bytes = encode_checkpoint(sample_model());
  bytes[16 + 12] = 7;  // second layer in_dim no longer matches the first output
  EXPECT_EQ(decode_kind(bytes), CheckpointError::Kind::kShape);
}

TEST(Checkpoint, MissingFileIsIoError) {
  try {
    load_checkpoint("/nonexistent/dir/model.bthk");
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::kIo);
  }
}

}  // namespace
}  // namespace bthick
