// Initialization bounds, EMA algebra, and the binary round trip are pinned
// with exact expected values; corruption tests name the failure offsets.

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "uniclr/encoder.hpp"
#include "uniclr/errors.hpp"
#include "uniclr/rng.hpp"

using namespace uniclr;
namespace fs = std::filesystem;

namespace {

ModelConfig small_model() {
  ModelConfig cfg;
  cfg.hidden = {8, 6};
  cfg.embed_dim = 4;
  cfg.standardize = true;
  return cfg;
}

fs::path temp_file(const char* name) {
  return fs::temp_directory_path() / name;
}

}  // namespace

TEST(Init, LayerTopologyAndFlags) {
  EncoderState s = init_params(small_model(), 5, 1);
  ASSERT_EQ(s.layers.size(), 3u);
  EXPECT_EQ(s.layers[0].w.rows(), 8);
  EXPECT_EQ(s.layers[0].w.cols(), 5);
  EXPECT_EQ(s.layers[1].w.rows(), 6);
  EXPECT_EQ(s.layers[1].w.cols(), 8);
  EXPECT_EQ(s.layers[2].w.rows(), 4);
  EXPECT_EQ(s.layers[2].w.cols(), 6);
  EXPECT_TRUE(s.layers[0].relu);
  EXPECT_TRUE(s.layers[0].standardize);
  EXPECT_TRUE(s.layers[1].relu);
  EXPECT_FALSE(s.layers[2].relu);
  EXPECT_FALSE(s.layers[2].standardize);
  EXPECT_EQ(s.input_dim(), 5);
  EXPECT_EQ(s.output_dim(), 4);
}

TEST(Init, GlorotBoundIsExactForSixtyFourToThirtyTwo) {
  // fan_in 64, fan_out 32: bound = sqrt(6/96) = 0.25 exactly.
  ModelConfig cfg;
  cfg.hidden = {};
  cfg.embed_dim = 32;
  EncoderState s = init_params(cfg, 64, 7);
  ASSERT_EQ(s.layers.size(), 1u);
  const Matrix& w = s.layers[0].w;
  EXPECT_LE(w.maxCoeff(), 0.25);
  EXPECT_GE(w.minCoeff(), -0.25);
  EXPECT_GT(w.maxCoeff(), 0.15);  // actually spread over the range
  EXPECT_LT(w.minCoeff(), -0.15);
  EXPECT_TRUE(s.layers[0].b.isZero(0.0));
}

TEST(Init, SameSeedSameBits) {
  EncoderState a = init_params(small_model(), 5, 42);
  EncoderState b = init_params(small_model(), 5, 42);
  EncoderState c = init_params(small_model(), 5, 43);
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    EXPECT_TRUE(a.layers[i].w == b.layers[i].w);
    EXPECT_TRUE(a.layers[i].b == b.layers[i].b);
  }
  EXPECT_FALSE(a.layers[0].w == c.layers[0].w);
}

TEST(Init, ModelConfigValidation) {
  ModelConfig cfg = small_model();
  cfg.embed_dim = 0;
  EXPECT_THROW(validate_model_config(cfg), Error);
  cfg = small_model();
  cfg.hidden = {4, 0};
  EXPECT_THROW(validate_model_config(cfg), Error);
  cfg = small_model();
  cfg.ema_momentum = 1.0;
  EXPECT_THROW(validate_model_config(cfg), Error);
}

TEST(Forward, EmbedMatchesTapeForward) {
  Rng rng(9);
  Matrix x = rng.normal_matrix(5, 6);
  EncoderState s = init_params(small_model(), 5, 3);
  Tape t;
  Var out = encoder_forward(t, s, x);
  Matrix eager = embed(s, x);
  EXPECT_TRUE(t.value(out) == eager);
}

TEST(Forward, EmbedIsBitwiseDeterministic) {
  Rng rng(10);
  Matrix x = rng.normal_matrix(5, 4);
  EncoderState s = init_params(small_model(), 5, 11);
  EXPECT_TRUE(embed(s, x) == embed(s, x));
}

TEST(Forward, InputDimAndBatchContracts) {
  EncoderState s = init_params(small_model(), 5, 1);
  Matrix wrong_dim = Matrix::Zero(4, 3);
  EXPECT_THROW(embed(s, wrong_dim), Error);
  // Standardization needs at least two samples for a batch statistic.
  Matrix single = Matrix::Zero(5, 1);
  EXPECT_THROW(embed(s, single), Error);
  ModelConfig plain = small_model();
  plain.standardize = false;
  EncoderState s2 = init_params(plain, 5, 1);
  EXPECT_NO_THROW(embed(s2, single));
}

TEST(Forward, TwinOutputMatchesEmbedAndBlocksGradients) {
  Rng rng(12);
  Matrix x = rng.normal_matrix(5, 4);
  EncoderState online = init_params(small_model(), 5, 20);
  EncoderState twin = init_params(small_model(), 5, 21);
  Tape t;
  EncoderTape params;
  Var z = encoder_forward(t, online, x, &params);
  Var zp = twin_forward(t, twin, x);
  EXPECT_TRUE(t.value(zp) == embed(twin, x));
  // A head that only touches the twin branch leaves online params untouched.
  Gradient g = backward(t, sum(t, zp));
  for (Var w : params.w) EXPECT_TRUE(g.at(w).isZero(0.0));
  (void)z;
}

TEST(Ema, EqualStatesAreAFixedPoint) {
  EncoderState online = init_params(small_model(), 5, 30);
  EncoderState twin = online;
  ema_update(twin, online, 0.99);
  for (std::size_t i = 0; i < twin.layers.size(); ++i)
    EXPECT_TRUE(twin.layers[i].w == online.layers[i].w);  // bitwise
}

TEST(Ema, ScalarRecursionFrozenValues) {
  // p = 0, online = 1, m = 0.99: one step 0.01, two steps 0.0199.
  ModelConfig cfg;
  cfg.hidden = {};
  cfg.embed_dim = 1;
  EncoderState online = init_params(cfg, 1, 1);
  online.layers[0].w(0, 0) = 1.0;
  EncoderState twin = online;
  twin.layers[0].w(0, 0) = 0.0;
  ema_update(twin, online, 0.99);
  EXPECT_NEAR(twin.layers[0].w(0, 0), 0.01, 1e-15);
  ema_update(twin, online, 0.99);
  EXPECT_NEAR(twin.layers[0].w(0, 0), 0.0199, 1e-15);
}

TEST(Checkpoint, EncoderRoundTripIsBitExact) {
  const fs::path path = temp_file("uniclr_encoder_rt.bin");
  EncoderState s = init_params(small_model(), 5, 77);
  save_encoder(path.string(), s);
  EncoderState r = load_encoder(path.string());
  ASSERT_EQ(r.layers.size(), s.layers.size());
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    EXPECT_TRUE(r.layers[i].w == s.layers[i].w);
    EXPECT_TRUE(r.layers[i].b == s.layers[i].b);
    EXPECT_EQ(r.layers[i].relu, s.layers[i].relu);
    EXPECT_EQ(r.layers[i].standardize, s.layers[i].standardize);
  }
  fs::remove(path);
}

TEST(Checkpoint, BadMagicIsAFormatError) {
  const fs::path path = temp_file("uniclr_encoder_magic.bin");
  EncoderState s = init_params(small_model(), 5, 78);
  save_encoder(path.string(), s);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  try {
    load_encoder(path.string());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Format);
  }
  fs::remove(path);
}

TEST(Checkpoint, TruncationNamesTheOffset) {
  const fs::path path = temp_file("uniclr_encoder_trunc.bin");
  EncoderState s = init_params(small_model(), 5, 79);
  save_encoder(path.string(), s);
  const auto full = fs::file_size(path);
  fs::resize_file(path, full / 2);
  try {
    load_encoder(path.string());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Format);
    EXPECT_NE(std::string(e.what()).find("truncated at byte"), std::string::npos);
  }
  fs::remove(path);
}

TEST(Checkpoint, TrailingBytesAreAFormatError) {
  const fs::path path = temp_file("uniclr_encoder_trail.bin");
  EncoderState s = init_params(small_model(), 5, 80);
  save_encoder(path.string(), s);
  {
    std::ofstream f(path, std::ios::app | std::ios::binary);
    f << "junk";
  }
  EXPECT_THROW(load_encoder(path.string()), Error);
  fs::remove(path);
}

TEST(Checkpoint, MissingFileIsAnIoError) {
  try {
    load_encoder("/nonexistent/uniclr_nowhere.bin");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
}
