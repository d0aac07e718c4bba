#include "segsr/checkpoint.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace segsr {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'P', 'S', 'A'};

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const Tensor<float>& t, bool with_shape) {
    if (with_shape) {
      u8(static_cast<std::uint8_t>(t.rank()));
      for (std::size_t d : t.shape().dims()) u32(static_cast<std::uint32_t>(d));
    }
    for (float v : t.data()) u32(std::bit_cast<std::uint32_t>(v));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

  void bytes(void* p, std::size_t n) {
    if (!is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n))) fail("truncated file");
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | static_cast<std::uint64_t>(u32()) << 32;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 26)) fail("implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Tensor<float> tensor() {
    const std::size_t rank = u8();
    if (rank == 0 || rank > Shape::kMaxRank) fail("bad tensor rank");
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = u32();
    return tensor(Shape(std::span<const std::size_t>(dims)));
  }
  Tensor<float> tensor(const Shape& shape) {
    Tensor<float> t(shape);
    for (float& v : t.data()) v = std::bit_cast<float>(u32());
    return t;
  }
  [[noreturn]] void fail(const std::string& what) const { throw IoError("checkpoint " + path_ + ": " + what); }

 private:
  std::istream& is_;
  std::string path_;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Kv = std::vector<std::pair<std::string, std::string>>;

Kv config_kv(const Checkpoint& c) {
  const GeneratorConfig& g = c.generator;
  const DiscriminatorConfig& d = c.discriminator;
  return {
      {"g.n_blocks", std::to_string(g.n_blocks)},
      {"g.channels", std::to_string(g.channels)},
      {"g.block_channels", std::to_string(g.block_channels)},
      {"g.block_layers", std::to_string(g.block_layers)},
      {"g.res_scale", fmt(g.res_scale)},
      {"g.slope", fmt(g.slope)},
      {"g.upscale", std::to_string(g.upscale)},
      {"g.spsa_residual", g.spsa_residual ? "1" : "0"},
      {"g.max_attention_positions", std::to_string(g.max_attention_positions)},
      {"d.input_size", std::to_string(d.input_size)},
      {"d.base_channels", std::to_string(d.base_channels)},
      {"d.stages", std::to_string(d.stages)},
      {"d.hidden", std::to_string(d.hidden)},
      {"d.slope", fmt(d.slope)},
      {"state.iteration", std::to_string(c.iteration)},
      {"state.phase", std::string(to_string(c.phase))},
      {"state.alpha_calibrated", c.alpha_calibrated ? "1" : "0"},
  };
}

void apply_kv(Checkpoint& c, const std::map<std::string, std::string>& kv, const Reader& r) {
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) r.fail(std::string("missing config key ") + key);
    return it->second;
  };
  auto u = [&](const char* key) {
    const std::string& s = get(key);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) r.fail(std::string("bad integer for ") + key);
    return v;
  };
  auto f = [&](const char* key) {
    const std::string& s = get(key);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) r.fail(std::string("bad number for ") + key);
    return v;
  };
  GeneratorConfig& g = c.generator;
  g.n_blocks = u("g.n_blocks");
  g.channels = u("g.channels");
  g.block_channels = u("g.block_channels");
  g.block_layers = u("g.block_layers");
  g.res_scale = f("g.res_scale");
  g.slope = f("g.slope");
  g.upscale = u("g.upscale");
  g.spsa_residual = u("g.spsa_residual") != 0;
  g.max_attention_positions = u("g.max_attention_positions");
  DiscriminatorConfig& d = c.discriminator;
  d.input_size = u("d.input_size");
  d.base_channels = u("d.base_channels");
  d.stages = u("d.stages");
  d.hidden = u("d.hidden");
  d.slope = f("d.slope");
  c.iteration = u("state.iteration");
  try {
    c.phase = parse_phase(get("state.phase"));
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  c.alpha_calibrated = u("state.alpha_calibrated") != 0;
}

void write_moments(Writer& w, std::uint64_t steps, const std::vector<MomentRecord>& ms) {
  w.u64(steps);
  w.u32(static_cast<std::uint32_t>(ms.size()));
  for (const auto& m : ms) {
    w.str(m.name);
    w.tensor(m.m, true);
    w.tensor(m.v, false);
  }
}

void read_moments(Reader& r, std::uint64_t& steps, std::vector<MomentRecord>& ms) {
  steps = r.u64();
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    MomentRecord m;
    m.name = r.str();
    m.m = r.tensor();
    m.v = r.tensor(m.m.shape());
    ms.push_back(std::move(m));
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ostringstream buf(std::ios::binary);
  Writer w(buf);
  w.bytes(kMagic.data(), 4);
  w.u32(Checkpoint::kVersion);
  const Kv kv = config_kv(c);
  w.u32(static_cast<std::uint32_t>(kv.size()));
  for (const auto& [k, v] : kv) {
    w.str(k);
    w.str(v);
  }
  w.str(c.run_config);
  w.u32(static_cast<std::uint32_t>(c.params.size()));
  for (const auto& p : c.params) {
    w.str(p.name);
    w.u8(static_cast<std::uint8_t>(p.group));
    w.tensor(p.value, true);
  }
  w.u32(static_cast<std::uint32_t>(c.masks.size()));
  const std::size_t layers = c.masks.empty() ? 0 : c.masks[0][0].layers();
  w.u32(static_cast<std::uint32_t>(layers));
  for (const RrdbMask& rm : c.masks)
    for (const BlockMask& bm : rm) {
      if (bm.layers() != layers) throw ConfigError("save_checkpoint: inconsistent mask layer counts");
      for (std::size_t l = 2; l <= layers; ++l)
        for (std::size_t i = 1; i < l; ++i) w.u8(bm.keep(l, i) ? 1 : 0);
    }
  write_moments(w, c.steps_g, c.moments_g);
  write_moments(w, c.steps_d, c.moments_d);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot create checkpoint " + path.string());
  const std::string bytes = buf.str();
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  Reader r(is, path.string());
  std::array<char, 4> magic{};
  r.bytes(magic.data(), 4);
  if (magic != kMagic) r.fail("bad magic");
  if (const std::uint32_t v = r.u32(); v != Checkpoint::kVersion) r.fail("unsupported version " + std::to_string(v));
  Checkpoint c;
  std::map<std::string, std::string> kv;
  for (std::uint32_t n = r.u32(), i = 0; i < n; ++i) {
    std::string k = r.str();
    kv[std::move(k)] = r.str();
  }
  apply_kv(c, kv, r);
  c.run_config = r.str();
  for (std::uint32_t n = r.u32(), i = 0; i < n; ++i) {
    TensorRecord p;
    p.name = r.str();
    const std::uint8_t group = r.u8();
    if (group > 1) r.fail("bad parameter group for " + p.name);
    p.group = static_cast<ParamGroup>(group);
    p.value = r.tensor();
    c.params.push_back(std::move(p));
  }
  const std::uint32_t rrdbs = r.u32(), layers = r.u32();
  for (std::uint32_t k = 0; k < rrdbs; ++k) {
    RrdbMask rm;
    for (BlockMask& bm : rm) {
      bm = BlockMask::full(layers);
      for (std::size_t l = 2; l <= layers; ++l)
        for (std::size_t i = 1; i < l; ++i) bm.set(l, i, r.u8() != 0);
    }
    c.masks.push_back(rm);
  }
  read_moments(r, c.steps_g, c.moments_g);
  read_moments(r, c.steps_d, c.moments_d);
  if (is.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes");
  return c;
}

Checkpoint capture(Model& model, std::string run_config) {
  Checkpoint c;
  c.generator = model.generator.config();
  c.discriminator = model.discriminator.config();
  c.iteration = model.iteration;
  c.phase = model.phase;
  c.alpha_calibrated = model.generator.alpha_calibrated();
  c.run_config = std::move(run_config);
  for (const Parameter<float>* p : model.generator.parameters()) c.params.push_back({"g." + p->name, p->group, p->value});
  for (const Parameter<float>* p : model.discriminator.parameters()) c.params.push_back({p->name, p->group, p->value});
  c.masks = model.generator.masks();
  c.steps_g = model.opt_g.steps();
  c.steps_d = model.opt_d.steps();
  for (const auto& [name, m] : model.opt_g.moments()) c.moments_g.push_back({name, m.m, m.v});
  for (const auto& [name, m] : model.opt_d.moments()) c.moments_d.push_back({name, m.m, m.v});
  return c;
}

Model restore(const Checkpoint& c) {
  Model model(c.generator, c.discriminator, 0, c.masks);
  std::map<std::string, Parameter<float>*> slots;
  for (Parameter<float>* p : model.generator.parameters()) slots["g." + p->name] = p;
  for (Parameter<float>* p : model.discriminator.parameters()) slots[p->name] = p;
  if (slots.size() != c.params.size()) {
    throw IoError("checkpoint holds " + std::to_string(c.params.size()) + " parameters, architecture expects " +
                  std::to_string(slots.size()));
  }
  for (const TensorRecord& rec : c.params) {
    auto it = slots.find(rec.name);
    if (it == slots.end()) throw IoError("checkpoint parameter " + rec.name + " is not part of the architecture");
    if (!(it->second->value.shape() == rec.value.shape())) {
      throw IoError("checkpoint parameter " + rec.name + " has shape " + rec.value.shape().str() + ", expected " +
                    it->second->value.shape().str());
    }
    it->second->value = rec.value;
  }
  model.generator.set_alpha_calibrated(c.alpha_calibrated);
  model.iteration = c.iteration;
  model.phase = c.phase;
  model.opt_g.set_steps(c.steps_g);
  model.opt_d.set_steps(c.steps_d);
  for (const auto& m : c.moments_g) model.opt_g.set_moments(m.name, {m.m, m.v});
  for (const auto& m : c.moments_d) model.opt_d.set_moments(m.name, {m.m, m.v});
  return model;
}

}  // namespace segsr
