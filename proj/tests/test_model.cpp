#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "drsn/checkpoint.hpp"
#include "drsn/model.hpp"
#include "oracles.hpp"

using namespace drsn;

namespace {

// Closed-form parameter count of the residual stack, written independently of
// the network builder.
std::size_t expected_count(const ModelConfig& c) {
  const std::size_t K = kConvKernel;
  std::size_t n = c.input_channels * c.stage_channels[0] * K + c.stage_channels[0];
  std::size_t in = c.stage_channels[0];
  for (std::size_t s = 0; s < c.stage_channels.size(); ++s) {
    const std::size_t out = c.stage_channels[s];
    for (std::size_t b = 0; b < c.blocks_per_stage[s]; ++b) {
      const bool projects = b == 0 || in != out;  // first unit of a stage has stride 2
      n += 2 * in + (in * out * K + out) + 2 * out + (out * out * K + out);
      if (projects) n += in * out + out;
      if (c.arch == Architecture::drsn) {
        const std::size_t m = c.fc_hidden == 0 ? out : c.fc_hidden;
        const std::size_t k = c.mode == ShrinkMode::channel_shared ? 1 : out;
        n += out * m + m + m * k + k;
      }
      in = out;
    }
  }
  return n + 2 * in + in * c.num_classes + c.num_classes;
}

ModelConfig toy(Architecture arch, ShrinkMode mode = ShrinkMode::channel_wise) {
  ModelConfig c;
  c.arch = arch;
  c.mode = mode;
  c.input_width = 48;
  c.stage_channels = {4, 8};
  c.blocks_per_stage = {2, 1};
  c.seed = 17;
  return c;
}

Tensor random_input(const ModelConfig& c, std::size_t batch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor(Shape{batch, c.input_channels, c.input_width},
                oracle::random_vector(rng, batch * c.input_channels * c.input_width, -2, 2));
}

Tensor logits(Network& net, const Tensor& x, Phase phase) {
  Tape tape(TapeOptions{.record = false});
  return net.forward(tape, tape.constant(x), phase).value();
}

}  // namespace

TEST_CASE("parameter count matches the closed form") {
  for (auto arch : {Architecture::drsn, Architecture::cnn}) {
    for (auto mode : {ShrinkMode::channel_shared, ShrinkMode::channel_wise}) {
      ModelConfig c;
      c.arch = arch;
      c.mode = mode;
      Network net(c);
      CHECK(net.parameter_count() == expected_count(c));
      c.fc_hidden = 3;
      Network narrow(c);
      CHECK(narrow.parameter_count() == expected_count(c));
    }
  }
}

TEST_CASE("forward produces logits of the right shape and rejects bad input") {
  ModelConfig c = toy(Architecture::drsn);
  Network net(c);
  CHECK(logits(net, random_input(c, 3, 1), Phase::train).shape() == Shape{3, 8});
  CHECK(logits(net, random_input(c, 1, 1), Phase::eval).shape() == Shape{1, 8});
  Tape tape;
  CHECK_THROWS_AS(net.forward(tape, tape.constant(Tensor(Shape{2, 7, 48})), Phase::eval),
                  DimensionError);
}

TEST_CASE("forward trace records one threshold set per unit") {
  for (auto mode : {ShrinkMode::channel_shared, ShrinkMode::channel_wise}) {
    ModelConfig c = toy(Architecture::drsn, mode);
    Network net(c);
    ForwardTrace trace;
    Tape tape(TapeOptions{.record = false});
    net.forward(tape, tape.constant(random_input(c, 2, 3)), Phase::train, &trace);
    REQUIRE(trace.thresholds.size() == 3);
    CHECK(trace.thresholds[0].tau.shape() == Shape{2, mode == ShrinkMode::channel_shared ? 1u : 4u});
    CHECK(trace.thresholds[2].tau.shape() == Shape{2, mode == ShrinkMode::channel_shared ? 1u : 8u});
  }
}

TEST_CASE("same seed builds identical networks, different seeds do not") {
  ModelConfig c = toy(Architecture::drsn);
  Network a(c), b(c);
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  c.seed = 18;
  Network d(c);
  CHECK(d.parameters()[0]->value != pa[0]->value);
}

TEST_CASE("forward is bitwise reproducible") {
  ModelConfig c = toy(Architecture::drsn);
  Network net(c);
  const Tensor x = random_input(c, 4, 2);
  CHECK(logits(net, x, Phase::eval) == logits(net, x, Phase::eval));
}

TEST_CASE("bypassing the thresholds turns the DRSN into the CNN baseline") {
  for (auto mode : {ShrinkMode::channel_shared, ShrinkMode::channel_wise}) {
    ModelConfig c = toy(Architecture::drsn, mode);
    Network drsn = build_drsn(c);
    Network cnn = build_cnn_baseline(c);
    // Shared layers come from the same stream, so they already agree.
    const auto pc = cnn.parameters();
    std::size_t shared = 0;
    for (Parameter* p : drsn.parameters())
      for (Parameter* q : pc)
        if (p->name == q->name) {
          CHECK(p->value == q->value);
          ++shared;
        }
    CHECK(shared == pc.size());
    drsn.set_threshold_bypass(true);
    const Tensor x = random_input(c, 3, 4);
    const Tensor a = logits(drsn, x, Phase::train), b = logits(cnn, x, Phase::train);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
  }
}

TEST_CASE("copy_shared_weights transfers every CNN tensor") {
  ModelConfig c = toy(Architecture::drsn);
  Network drsn(c);
  ModelConfig cc = c;
  cc.arch = Architecture::cnn;
  cc.seed = 99;
  Network cnn(cc);
  const std::size_t copied = copy_shared_weights(cnn, drsn);
  CHECK(copied == cnn.parameters().size() + 2 * cnn.norms().size());
  CHECK(cnn.parameters()[0]->value == drsn.parameters()[0]->value);
}

TEST_CASE("model config validation and text round trip") {
  ModelConfig c = toy(Architecture::drsn, ShrinkMode::channel_shared);
  c.fc_hidden = 5;
  CHECK(ModelConfig::from_text(c.to_text()) == c);
  ModelConfig bad = c;
  bad.stage_channels = {4, 8, 16};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.num_classes = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.input_width = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("checkpoint round trip reproduces logits bitwise") {
  ModelConfig c = toy(Architecture::drsn);
  Network net(c);
  const Tensor x = random_input(c, 4, 5);
  logits(net, x, Phase::train);  // move the running statistics off their defaults
  for (Parameter* p : net.parameters()) p->value[0] += 0.125;
  const auto path = std::filesystem::temp_directory_path() / "drsn_test_roundtrip.shrk";
  save_checkpoint(net, path);
  Network back = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(back.config() == net.config());
  CHECK(logits(back, x, Phase::eval) == logits(net, x, Phase::eval));
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(net));
}

TEST_CASE("checkpoint loading reports each failure distinctly") {
  ModelConfig c = toy(Architecture::cnn);
  Network net(c);
  const std::string good = serialize_checkpoint(net);

  std::string magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(magic), CheckpointCorruptError);

  std::string version = good;
  version[4] = 9;
  CHECK_THROWS_AS(deserialize_checkpoint(version), CheckpointVersionError);

  CHECK_THROWS_AS(deserialize_checkpoint(good.substr(0, good.size() - 5)), CheckpointCorruptError);
  CHECK_THROWS_AS(deserialize_checkpoint(good + "x"), CheckpointCorruptError);

  // First tensor is stem.weight; bump its leading extent.
  std::uint64_t config_len = 0;
  std::memcpy(&config_len, good.data() + 8, 8);
  const std::size_t dim0 = 16 + config_len + 8 + 4 + std::strlen("stem.weight") + 4;
  std::string shape = good;
  shape[dim0] = static_cast<char>(shape[dim0] + 1);
  try {
    deserialize_checkpoint(shape);
    FAIL("expected a shape error");
  } catch (const CheckpointShapeError& e) {
    CHECK(std::string(e.what()).find("stem.weight") != std::string::npos);
  }

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/model.shrk"), IoError);
}
