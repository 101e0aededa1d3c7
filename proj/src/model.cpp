#include "drsn/model.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace drsn {
namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::uint64_t parse_u64(const std::string& key, std::string_view text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("config field '" + key + "' is not an unsigned integer: '" +
                      std::string(text) + "'");
  }
  return v;
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ConfigError("config field '" + key + "' is not a number: '" + text + "'");
  }
  return v;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    out.push_back(parse_u64(key, rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("invalid model config: " + field + " " + why);
  };
  if (input_channels == 0) fail("input_channels", "must be positive");
  if (input_width == 0) fail("input_width", "must be positive");
  if (num_classes < 2) fail("num_classes", "must be at least 2");
  if (stage_channels.empty()) fail("stage_channels", "must list at least one stage");
  if (blocks_per_stage.size() != stage_channels.size()) {
    fail("blocks_per_stage", "must have the same length as stage_channels");
  }
  for (auto c : stage_channels)
    if (c == 0) fail("stage_channels", "entries must be positive");
  for (auto b : blocks_per_stage)
    if (b == 0) fail("blocks_per_stage", "entries must be positive");
  if (!(bn_eps > 0.0)) fail("bn_eps", "must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) fail("bn_momentum", "must be in (0,1)");
}

std::string ModelConfig::to_text() const {
  std::string s;
  s += fmt::format("arch={}\n", arch == Architecture::drsn ? "drsn" : "cnn");
  s += fmt::format("input_channels={}\n", input_channels);
  s += fmt::format("input_width={}\n", input_width);
  s += fmt::format("stage_channels={}\n", join(stage_channels));
  s += fmt::format("blocks_per_stage={}\n", join(blocks_per_stage));
  s += fmt::format("fc_hidden={}\n", fc_hidden);
  s += fmt::format("num_classes={}\n", num_classes);
  s += fmt::format("mode={}\n", to_string(mode));
  s += fmt::format("seed={}\n", seed);
  s += fmt::format("bn_eps={:.17g}\n", bn_eps);
  s += fmt::format("bn_momentum={:.17g}\n", bn_momentum);
  s += fmt::format("kernel={}\n", kConvKernel);
  s += fmt::format("block_order={}\n", kBlockOrder);
  return s;
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line without '=': '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("config is missing field '" + key + "'");
    return it->second;
  };

  ModelConfig c;
  const std::string& arch = get("arch");
  if (arch == "drsn") c.arch = Architecture::drsn;
  else if (arch == "cnn") c.arch = Architecture::cnn;
  else throw ConfigError("config field 'arch' must be drsn or cnn, got '" + arch + "'");
  c.input_channels = parse_u64("input_channels", get("input_channels"));
  c.input_width = parse_u64("input_width", get("input_width"));
  c.stage_channels = parse_list("stage_channels", get("stage_channels"));
  c.blocks_per_stage = parse_list("blocks_per_stage", get("blocks_per_stage"));
  c.fc_hidden = parse_u64("fc_hidden", get("fc_hidden"));
  c.num_classes = parse_u64("num_classes", get("num_classes"));
  c.mode = parse_shrink_mode(get("mode"));
  c.seed = parse_u64("seed", get("seed"));
  c.bn_eps = parse_double("bn_eps", get("bn_eps"));
  c.bn_momentum = parse_double("bn_momentum", get("bn_momentum"));
  if (parse_u64("kernel", get("kernel")) != kConvKernel) {
    throw ConfigError("config field 'kernel' must be " + std::to_string(kConvKernel));
  }
  if (get("block_order") != kBlockOrder) {
    throw ConfigError("config field 'block_order' must be " + std::string(kBlockOrder));
  }
  c.validate();
  return c;
}

ResidualUnit::ResidualUnit(const std::string& name, std::size_t in_channels,
                           std::size_t out_channels, std::size_t stride,
                           std::optional<ShrinkMode> shrink_mode, std::size_t hidden,
                           double bn_eps, double bn_momentum)
    : bn1(name + ".bn1", in_channels, bn_eps, bn_momentum),
      conv1(name + ".conv1", in_channels, out_channels, kConvKernel, stride, kConvKernel / 2),
      bn2(name + ".bn2", out_channels, bn_eps, bn_momentum),
      conv2(name + ".conv2", out_channels, out_channels, kConvKernel, 1, kConvKernel / 2) {
  if (shrink_mode) {
    shrink.emplace(name + ".shrink", *shrink_mode, out_channels,
                   hidden == 0 ? out_channels : hidden);
  }
  if (stride != 1 || in_channels != out_channels) {
    downsample.emplace(name + ".shortcut", in_channels, out_channels, 1, stride, 0);
  }
}

void ResidualUnit::init(Rng& rng) {
  conv1.init(rng);
  conv2.init(rng);
  if (downsample) downsample->init(rng);
}

Var ResidualUnit::forward(Tape& tape, Var x, Phase phase, bool bypass_threshold,
                          ForwardTrace* trace) {
  Var h = conv1.forward(tape, ops::relu(bn1.forward(tape, x, phase)));
  h = conv2.forward(tape, ops::relu(bn2.forward(tape, h, phase)));
  if (shrink && !bypass_threshold) {
    ThresholdResult th = shrink->compute(tape, h);
    if (trace) {
      trace->thresholds.push_back({th.tau.value(), th.alpha.value(), th.mean_abs.value()});
    }
    h = soft_threshold(h, th);
  }
  Var shortcut = downsample ? downsample->forward(tape, x) : x;
  if (shortcut.shape() != h.shape()) {
    throw DimensionError("residual add: main path " + shape_string(h.shape()) +
                         " vs shortcut " + shape_string(shortcut.shape()));
  }
  return ops::add(h, shortcut);
}

void ResidualUnit::collect(std::vector<Parameter*>& out) {
  bn1.collect(out);
  conv1.collect(out);
  bn2.collect(out);
  conv2.collect(out);
  if (shrink) shrink->collect(out);
  if (downsample) downsample->collect(out);
}

Network::Network(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  std::optional<ShrinkMode> shrink;
  if (c.arch == Architecture::drsn) shrink = c.mode;

  stem_ = Conv1d("stem", c.input_channels, c.stage_channels[0], kConvKernel, 1, kConvKernel / 2);
  std::size_t channels = c.stage_channels[0];
  for (std::size_t s = 0; s < c.stage_channels.size(); ++s) {
    for (std::size_t b = 0; b < c.blocks_per_stage[s]; ++b) {
      const std::size_t stride = b == 0 ? 2 : 1;
      units_.emplace_back(fmt::format("stage{}.unit{}", s, b), channels, c.stage_channels[s],
                          stride, shrink, c.fc_hidden, c.bn_eps, c.bn_momentum);
      channels = c.stage_channels[s];
    }
  }
  head_bn_ = BatchNorm1d("head.bn", channels, c.bn_eps, c.bn_momentum);
  head_ = Dense("head.fc", channels, c.num_classes);

  Rng rng(derive_seed(c.seed, stream::init));
  stem_.init(rng);
  for (auto& u : units_) u.init(rng);
  head_.init(rng);
  // Threshold subnets draw from their own stream; the layers a DRSN shares
  // with the CNN baseline get the same initial weights for a given seed.
  Rng shrink_rng(derive_seed(c.seed, stream::threshold_init));
  for (auto& u : units_)
    if (u.shrink) u.shrink->init(shrink_rng);
}

Var Network::forward(Tape& tape, Var x, Phase phase, ForwardTrace* trace) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[1] != config_.input_channels || s[2] != config_.input_width) {
    throw DimensionError(fmt::format("network expects [B,{},{}], got {}", config_.input_channels,
                                     config_.input_width, shape_string(s)));
  }
  Var h = stem_.forward(tape, x);
  for (auto& u : units_) h = u.forward(tape, h, phase, bypass_threshold_, trace);
  h = ops::relu(head_bn_.forward(tape, h, phase));
  return head_.forward(tape, gap(h, GapOver::width));
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  stem_.collect(out);
  for (auto& u : units_) u.collect(out);
  head_bn_.collect(out);
  head_.collect(out);
  return out;
}

std::vector<BatchNorm1d*> Network::norms() {
  std::vector<BatchNorm1d*> out;
  for (auto& u : units_) u.collect_norms(out);
  out.push_back(&head_bn_);
  return out;
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->value.size();
  return n;
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

Network build_drsn(ModelConfig config) {
  config.arch = Architecture::drsn;
  return Network(std::move(config));
}

Network build_cnn_baseline(ModelConfig config) {
  config.arch = Architecture::cnn;
  return Network(std::move(config));
}

std::size_t copy_shared_weights(Network& dst, Network& src) {
  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : src.parameters()) by_name[p->name] = p;
  std::size_t copied = 0;
  for (Parameter* p : dst.parameters()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) continue;
    if (it->second->value.shape() != p->value.shape()) {
      throw DimensionError("shared parameter " + p->name + " differs in shape");
    }
    p->value = it->second->value;
    ++copied;
  }
  std::map<std::string, BatchNorm1d*> norms;
  for (BatchNorm1d* bn : src.norms()) norms[bn->name] = bn;
  for (BatchNorm1d* bn : dst.norms()) {
    auto it = norms.find(bn->name);
    if (it == norms.end()) continue;
    bn->running_mean = it->second->running_mean;
    bn->running_var = it->second->running_var;
    copied += 2;
  }
  return copied;
}

}  // namespace drsn
