#include <gtest/gtest.h>

#include "kbrd/checkpoint.hpp"
#include "kbrd/train.hpp"
#include "testing.hpp"

using namespace kbrd;
using namespace kbrd::testing;

namespace {

TrainConfig short_training() {
  TrainConfig c;
  c.seed = 2;
  c.epochs = 2;
  c.batch_size = 2;
  c.model = tiny_model_config();
  return c;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitIdentical) {
  auto w = tiny_world(3);
  auto bytes = serialize_checkpoint(w.model);
  auto loaded = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(loaded.model), bytes);
  EXPECT_FALSE(loaded.optimizer.has_value());

  const auto& a = w.model;
  const auto& b = loaded.model;
  EXPECT_EQ(b.symbols().vocab().words(), a.symbols().vocab().words());
  EXPECT_EQ(b.graph().num_entities(), a.graph().num_entities());
  for (const auto& ex : w.examples) {
    EXPECT_EQ(b.recommend(ex.context).probs.to_vector(), a.recommend(ex.context).probs.to_vector());
    EXPECT_EQ(b.vocabulary_bias(ex.context), a.vocabulary_bias(ex.context));
    EXPECT_EQ(b.generate(ex.history).symbols, a.generate(ex.history).symbols);
  }
}

TEST(Checkpoint, FileRoundTrip) {
  TempDir dir;
  auto w = tiny_world(4);
  save_checkpoint(dir.file("m.ckpt"), w.model);
  auto loaded = load_checkpoint(dir.file("m.ckpt"));
  EXPECT_EQ(serialize_checkpoint(loaded.model), serialize_checkpoint(w.model));
  EXPECT_THROW(load_checkpoint(dir.file("missing.ckpt")), std::runtime_error);
}

TEST(Checkpoint, TruncationIsDetected) {
  auto bytes = serialize_checkpoint(tiny_world(1).model);
  for (std::size_t keep : {std::size_t{0}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<unsigned char> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep));
    EXPECT_THROW(deserialize_checkpoint(cut), CheckpointIntegrityError) << "kept " << keep;
  }
}

TEST(Checkpoint, FlippedPayloadByteFailsTheChecksum) {
  auto bytes = serialize_checkpoint(tiny_world(1).model);
  bytes[bytes.size() - 20] ^= 0x01;
  EXPECT_THROW(deserialize_checkpoint(bytes), CheckpointIntegrityError);
}

TEST(Checkpoint, BadMagicAndVersion) {
  auto bytes = serialize_checkpoint(tiny_world(1).model);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), CheckpointIntegrityError);
  auto newer = bytes;
  newer[8] = static_cast<unsigned char>(kCheckpointVersion + 1);
  EXPECT_THROW(deserialize_checkpoint(newer), CheckpointVersionError);
}

TEST(Checkpoint, OptimizerStateRestores) {
  auto w = tiny_world(5);
  auto cfg = short_training();
  auto r = train(w.model, w.examples, cfg);
  auto loaded = deserialize_checkpoint(serialize_checkpoint(w.model, &r.optimizer));
  ASSERT_TRUE(loaded.optimizer.has_value());
  EXPECT_EQ(loaded.optimizer->steps, r.optimizer.steps());

  auto opt = make_optimizer(loaded.model, cfg);
  restore_optimizer(opt, *loaded.optimizer);
  EXPECT_EQ(opt.steps(), r.optimizer.steps());
  ASSERT_EQ(opt.slots().size(), r.optimizer.slots().size());
  for (std::size_t i = 0; i < opt.slots().size(); ++i) {
    EXPECT_EQ(opt.slots()[i].m, r.optimizer.slots()[i].m) << opt.slots()[i].param.name;
    EXPECT_EQ(opt.slots()[i].v, r.optimizer.slots()[i].v) << opt.slots()[i].param.name;
  }
}

TEST(Checkpoint, OptimizerStateForAnotherLayoutIsRejected) {
  auto w = tiny_world(5);
  auto cfg = short_training();
  auto r = train(w.model, w.examples, cfg);
  auto state = deserialize_checkpoint(serialize_checkpoint(w.model, &r.optimizer)).optimizer;
  ASSERT_TRUE(state.has_value());
  state->names.pop_back();
  auto opt = make_optimizer(w.model, cfg);
  EXPECT_THROW(restore_optimizer(opt, *state), ConfigError);
}

TEST(Checkpoint, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(nullptr, 0), 0xcbf29ce484222325ULL);
  const unsigned char a = 'a';
  EXPECT_EQ(fnv1a64(&a, 1), 0xaf63dc4c8601ec8cULL);
}
