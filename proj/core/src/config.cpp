#include "segsr/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace segsr {

namespace {

// clang-format off
constexpr std::array kKeys = {
    KeySpec{"seed", KeyKind::integer, "0", "run seed; all randomness derives from it"},
    KeySpec{"output_dir", KeyKind::path, "", "directory for checkpoints, traces and reports"},
    KeySpec{"manifest", KeyKind::path, "", "dataset manifest file"},
    KeySpec{"primary_dir", KeyKind::path, "", "prepare-data: directory of primary_set image/map pairs"},
    KeySpec{"aux_dir", KeyKind::path, "", "prepare-data: directory of aux_set image/map pairs"},
    KeySpec{"crop_size", KeyKind::integer, "96", "HR crop side"},
    KeySpec{"ratio", KeyKind::ratio, "10:1", "primary:aux sampling ratio"},
    KeySpec{"n_blocks", KeyKind::integer, "3", "residual-in-residual blocks"},
    KeySpec{"channels", KeyKind::integer, "16", "trunk feature channels"},
    KeySpec{"block_channels", KeyKind::integer, "16", "dense-block feature channels"},
    KeySpec{"block_layers", KeyKind::integer, "5", "conv layers per dense block"},
    KeySpec{"res_scale", KeyKind::number, "0.2", "residual scaling"},
    KeySpec{"slope", KeyKind::number, "0.2", "leaky ReLU slope"},
    KeySpec{"spsa_residual", KeyKind::boolean, "true", "attention output added to its input through gamma"},
    KeySpec{"max_attention_positions", KeyKind::integer, "4096", "cap on attention positions"},
    KeySpec{"d_base_channels", KeyKind::integer, "8", "discriminator first-stage width"},
    KeySpec{"d_stages", KeyKind::integer, "4", "discriminator downsampling stages"},
    KeySpec{"d_hidden", KeyKind::integer, "32", "discriminator hidden dense width"},
    KeySpec{"batch_size", KeyKind::integer, "16", "samples per iteration"},
    KeySpec{"beta1", KeyKind::number, "0.9", "Adam beta1"},
    KeySpec{"beta2", KeyKind::number, "0.999", "Adam beta2"},
    KeySpec{"decay_factor", KeyKind::number, "2", "learning-rate step-decay divisor"},
    KeySpec{"psnr_iterations", KeyKind::integer, "1000", "pretraining iterations"},
    KeySpec{"psnr_lr", KeyKind::number, "2e-4", "pretraining learning rate"},
    KeySpec{"psnr_decay_interval", KeyKind::integer, "200000", "pretraining decay interval"},
    KeySpec{"gan_iterations", KeyKind::integer, "1000", "adversarial iterations"},
    KeySpec{"gan_lr_rest", KeyKind::number, "1e-4", "adversarial learning rate outside the attention layer"},
    KeySpec{"gan_lr_attention", KeyKind::number, "5e-4", "adversarial learning rate of the attention layer"},
    KeySpec{"gan_decay_interval", KeyKind::integer, "100000", "adversarial decay interval"},
    KeySpec{"lambda_l1", KeyKind::number, "1e-2", "adversarial-phase L1 weight"},
    KeySpec{"lambda_gan", KeyKind::number, "5e-3", "adversarial-phase GAN weight"},
    KeySpec{"gan_loss", KeyKind::gan_loss, "standard", "standard or relativistic"},
    KeySpec{"checkpoint_every", KeyKind::integer, "0", "extra checkpoint interval; 0 writes only the final one"},
    KeySpec{"epsilon", KeyKind::number, "0.05", "prune keep-all threshold"},
    KeySpec{"stats_window", KeyKind::integer, "100", "dissimilarity ring-buffer length"},
};
// clang-format on

const KeySpec* find_key(std::string_view name) {
  auto it = std::find_if(kKeys.begin(), kKeys.end(), [&](const KeySpec& k) { return k.name == name; });
  return it == kKeys.end() ? nullptr : &*it;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("config key " + std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(out)) {
    throw ConfigError("config key " + std::string(key) + ": expected a number, got '" + s + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key " + std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

std::pair<std::size_t, std::size_t> to_ratio(std::string_view key, std::string_view v) {
  const auto colon = v.find(':');
  if (colon == std::string_view::npos) throw ConfigError("config key " + std::string(key) + ": expected P:A");
  const auto p = to_u64(key, v.substr(0, colon)), a = to_u64(key, v.substr(colon + 1));
  if (p + a == 0) throw ConfigError("config key " + std::string(key) + ": ratio must have a positive entry");
  return {p, a};
}

void check_value(const KeySpec& k, std::string_view v) {
  switch (k.kind) {
    case KeyKind::integer: to_u64(k.name, v); break;
    case KeyKind::number: to_double(k.name, v); break;
    case KeyKind::boolean: to_bool(k.name, v); break;
    case KeyKind::ratio: to_ratio(k.name, v); break;
    case KeyKind::gan_loss: parse_gan_loss(v); break;
    case KeyKind::text:
    case KeyKind::path:
      if (v.empty()) throw ConfigError("config key " + std::string(k.name) + ": empty value");
      break;
  }
}

}  // namespace

std::span<const KeySpec> RunConfig::known_keys() { return kKeys; }

RunConfig RunConfig::parse(std::string_view text, std::string_view origin) {
  RunConfig cfg;
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(lineno);
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    if (cfg.has(key)) throw ConfigError(where + ": duplicate key '" + std::string(key) + "'");
    try {
      cfg.set(key, std::string(trim(line.substr(eq + 1))));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  RunConfig cfg = parse(ss.str(), path.string());
  cfg.base_ = path.parent_path();
  return cfg;
}

void RunConfig::set(std::string_view key, std::string value) {
  const KeySpec* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + std::string(key) + "'");
  check_value(*k, value);
  values_[std::string(key)] = std::move(value);
}

bool RunConfig::has(std::string_view key) const { return values_.find(key) != values_.end(); }

void RunConfig::require(std::initializer_list<std::string_view> keys, std::string_view command) const {
  for (std::string_view k : keys) {
    if (!has(k)) throw ConfigError(std::string(command) + " requires config key '" + std::string(k) + "'");
  }
}

const std::string& RunConfig::raw(std::string_view key) const {
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  const KeySpec* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + std::string(key) + "'");
  if (k->fallback.empty()) throw ConfigError("config key '" + std::string(key) + "' is not set");
  static thread_local std::string fallback;
  fallback = std::string(k->fallback);
  return fallback;
}

std::string RunConfig::text(std::string_view key) const { return raw(key); }

std::filesystem::path RunConfig::path(std::string_view key) const {
  std::filesystem::path p{raw(key)};
  return p.is_absolute() || base_.empty() ? p : base_ / p;
}

std::uint64_t RunConfig::integer(std::string_view key) const { return to_u64(key, raw(key)); }
double RunConfig::number(std::string_view key) const { return to_double(key, raw(key)); }
bool RunConfig::flag(std::string_view key) const { return to_bool(key, raw(key)); }

GeneratorConfig RunConfig::generator() const {
  GeneratorConfig g;
  g.n_blocks = integer("n_blocks");
  g.channels = integer("channels");
  g.block_channels = integer("block_channels");
  g.block_layers = integer("block_layers");
  g.res_scale = number("res_scale");
  g.slope = number("slope");
  g.spsa_residual = flag("spsa_residual");
  g.max_attention_positions = integer("max_attention_positions");
  g.validate();
  return g;
}

DiscriminatorConfig RunConfig::discriminator() const {
  DiscriminatorConfig d;
  d.input_size = integer("crop_size");
  d.base_channels = integer("d_base_channels");
  d.stages = integer("d_stages");
  d.hidden = integer("d_hidden");
  d.slope = number("slope");
  d.validate();
  return d;
}

TrainSchedule RunConfig::schedule(Phase phase) const {
  TrainSchedule s;
  s.phase = phase;
  s.seed = integer("seed");
  s.batch_size = integer("batch_size");
  s.beta1 = number("beta1");
  s.beta2 = number("beta2");
  s.decay_factor = number("decay_factor");
  s.lambda_l1 = number("lambda_l1");
  s.lambda_gan = number("lambda_gan");
  if (phase == Phase::psnr_pretrain) {
    s.iterations = integer("psnr_iterations");
    s.lr_rest = s.lr_attention = number("psnr_lr");
    s.decay_interval = integer("psnr_decay_interval");
  } else {
    s.iterations = integer("gan_iterations");
    s.lr_rest = number("gan_lr_rest");
    s.lr_attention = number("gan_lr_attention");
    s.decay_interval = integer("gan_decay_interval");
  }
  s.validate();
  return s;
}

GanLossKind RunConfig::gan_loss() const { return parse_gan_loss(raw("gan_loss")); }

std::string RunConfig::canonical() const {
  std::string out;
  for (const KeySpec& k : kKeys) {
    if (!has(k.name) && k.fallback.empty()) continue;
    out += std::string(k.name) + " = " + raw(k.name) + "\n";
  }
  return out;
}

}  // namespace segsr
