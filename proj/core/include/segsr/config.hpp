#pragma once

#include <filesystem>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "segsr/generator.hpp"
#include "segsr/optimizer.hpp"

namespace segsr {

enum class KeyKind : std::uint8_t { integer, number, boolean, text, path, ratio, gan_loss };

struct KeySpec {
  std::string_view name;
  KeyKind kind;
  std::string_view fallback;  // empty: no default
  std::string_view help;
};

// Flat "key = value" run configuration. '#' starts a comment; unknown keys
// and malformed values are rejected when parsed.
class RunConfig {
 public:
  static std::span<const KeySpec> known_keys();

  RunConfig() = default;
  static RunConfig parse(std::string_view text, std::string_view origin = "<config>");
  // Relative path values resolve against the file's directory.
  static RunConfig load(const std::filesystem::path& path);

  void set(std::string_view key, std::string value);
  bool has(std::string_view key) const;
  // Throws ConfigError naming the first missing key.
  void require(std::initializer_list<std::string_view> keys, std::string_view command) const;

  std::string text(std::string_view key) const;
  std::filesystem::path path(std::string_view key) const;
  std::uint64_t integer(std::string_view key) const;
  double number(std::string_view key) const;
  bool flag(std::string_view key) const;

  GeneratorConfig generator() const;
  DiscriminatorConfig discriminator() const;
  TrainSchedule schedule(Phase phase) const;
  GanLossKind gan_loss() const;

  // Every key with its effective value, one per line in table order. Parsing
  // the result yields an equivalent configuration.
  std::string canonical() const;

  const std::filesystem::path& base_dir() const noexcept { return base_; }

 private:
  const std::string& raw(std::string_view key) const;

  std::map<std::string, std::string, std::less<>> values_;
  std::filesystem::path base_;
};

}  // namespace segsr
