#include "basis/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

namespace basis {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string in_quotes(std::string_view s) { return "'" + std::string(s) + "'"; }

template <class T>
T parse_integer(std::string_view key, std::string_view value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got " + in_quotes(value));
  }
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError(std::string(key) + ": expected a number, got " + in_quotes(value));
  }
  return out;
}

DenseMode parse_mode(std::string_view key, std::string_view value) {
  if (auto m = parse_dense_mode(value)) return *m;
  throw ConfigError(std::string(key) + ": expected exact or basis, got " + in_quotes(value));
}

using Setter = std::function<void(CliConfig&, std::string_view key, std::string_view value,
                                  const std::filesystem::path& base)>;

struct Entry {
  std::string key;
  Setter set;
};

template <class Field>
Entry size_entry(std::string key, Field field) {
  return {std::move(key), [field](CliConfig& c, std::string_view k, std::string_view v, const auto&) {
            field(c) = parse_integer<std::size_t>(k, v);
          }};
}

template <class Field>
Entry real_entry(std::string key, Field field) {
  return {std::move(key), [field](CliConfig& c, std::string_view k, std::string_view v, const auto&) {
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(parse_real(k, v));
          }};
}

#define FIELD(expr) [](CliConfig & c) -> auto& { return c.expr; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back({"model.kind", [](CliConfig& c, std::string_view k, std::string_view v, const auto&) {
                   if (v == "transformer") c.train.model = ModelKind::transformer;
                   else if (v == "mlp") c.train.model = ModelKind::mlp;
                   else throw ConfigError(std::string(k) + ": expected transformer or mlp, got " + in_quotes(v));
                 }});
    t.push_back(size_entry("model.d_model", FIELD(train.d_model)));
    t.push_back(size_entry("model.n_heads", FIELD(train.n_heads)));
    t.push_back(size_entry("model.n_layers", FIELD(train.n_layers)));
    t.push_back(size_entry("model.mlp_hidden", FIELD(train.mlp_hidden)));
    t.push_back(size_entry("model.vocab_size", FIELD(train.vocab_size)));
    t.push_back(size_entry("model.seq_len", FIELD(train.seq_len)));
    t.push_back(size_entry("train.batch_size", FIELD(train.batch_size)));
    t.push_back(size_entry("train.steps", FIELD(train.steps)));
    t.push_back(size_entry("train.eval_interval", FIELD(train.eval_interval)));
    t.push_back(size_entry("train.val_batches", FIELD(train.val_batches)));
    t.push_back(real_entry("train.lr", FIELD(train.lr)));
    t.push_back(real_entry("train.momentum", FIELD(train.momentum)));
    t.push_back({"train.seed", [](CliConfig& c, std::string_view k, std::string_view v, const auto&) {
                   c.train.seed = parse_integer<std::uint64_t>(k, v);
                 }});
    t.push_back({"basis.mode", [](CliConfig& c, std::string_view k, std::string_view v, const auto&) {
                   c.train.mode = parse_mode(k, v);
                 }});
    t.push_back(size_entry("basis.rank", FIELD(train.rank)));
    t.push_back(real_entry("basis.lambda", FIELD(train.lambda)));
    t.push_back(real_entry("basis.epsilon", FIELD(train.epsilon)));
    t.push_back({"data.corpus", [](CliConfig& c, std::string_view k, std::string_view v, const auto& base) {
                   if (v.empty()) throw ConfigError(std::string(k) + ": empty path");
                   c.corpus = base / std::filesystem::path(std::string(v));
                 }});
    t.push_back(real_entry("data.split", FIELD(split)));
    t.push_back({"output.dir", [](CliConfig& c, std::string_view k, std::string_view v, const auto& base) {
                   if (v.empty()) throw ConfigError(std::string(k) + ": empty path");
                   c.out_dir = base / std::filesystem::path(std::string(v));
                 }});
    t.push_back(size_entry("diagnose.sts_batch", FIELD(diagnose.sts_batch)));
    t.push_back(size_entry("diagnose.sts_rank", FIELD(diagnose.sts_rank)));
    t.push_back(size_entry("diagnose.sts_trials", FIELD(diagnose.sts_trials)));
    t.push_back(size_entry("diagnose.variance_batch", FIELD(diagnose.variance_batch)));
    t.push_back(size_entry("diagnose.variance_rank", FIELD(diagnose.variance_rank)));
    t.push_back(size_entry("diagnose.variance_in", FIELD(diagnose.variance_in)));
    t.push_back(size_entry("diagnose.variance_out", FIELD(diagnose.variance_out)));
    t.push_back(size_entry("diagnose.variance_trials", FIELD(diagnose.variance_trials)));
    t.push_back(size_entry("diagnose.variance_instances", FIELD(diagnose.variance_instances)));
    t.push_back({"diagnose.variance_hashing",
                 [](CliConfig& c, std::string_view k, std::string_view v, const auto&) {
                   if (v == "both") c.diagnose.variance_uniform_only = false;
                   else if (v == "uniform") c.diagnose.variance_uniform_only = true;
                   else throw ConfigError(std::string(k) + ": expected both or uniform, got " + in_quotes(v));
                 }});
    t.push_back(size_entry("diagnose.norm_matrices", FIELD(diagnose.norm_matrices)));
    t.push_back(size_entry("diagnose.norm_rows", FIELD(diagnose.norm_rows)));
    t.push_back(size_entry("diagnose.norm_cols", FIELD(diagnose.norm_cols)));
    t.push_back(size_entry("diagnose.fd_coords", FIELD(diagnose.fd_coords)));
    t.push_back({"diagnose.seed", [](CliConfig& c, std::string_view k, std::string_view v, const auto&) {
                   c.diagnose.seed = parse_integer<std::uint64_t>(k, v);
                 }});
    return t;
  }();
  return table;
}

#undef FIELD

constexpr std::string_view kLayerPrefix = "layer.";

std::string resolve_key(std::string_view key) {
  if (key.starts_with(kLayerPrefix)) return std::string(key);
  for (const auto& e : entries())
    if (e.key == key) return e.key;
  if (key.find('.') == std::string_view::npos) {
    std::string match;
    for (const auto& e : entries()) {
      const std::string_view leaf = std::string_view(e.key).substr(e.key.find('.') + 1);
      if (leaf == key) {
        if (!match.empty()) throw ConfigError("ambiguous key " + in_quotes(key) + ": " + match + " or " + e.key);
        match = e.key;
      }
    }
    if (!match.empty()) return match;
  }
  throw ConfigError("unknown key " + in_quotes(key));
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& e : entries()) out.push_back(e.key);
    return out;
  }();
  return keys;
}

void apply_setting(CliConfig& config, std::string_view key, std::string_view value,
                   const std::filesystem::path& base_dir) {
  key = trim(key);
  value = trim(value);
  const std::string canonical = resolve_key(key);
  if (canonical.starts_with(kLayerPrefix)) {
    const std::string layer = canonical.substr(kLayerPrefix.size());
    if (layer.empty()) throw ConfigError(canonical + ": missing layer name");
    config.train.layer_modes[layer] = parse_mode(canonical, value);
    return;
  }
  for (const auto& e : entries()) {
    if (e.key == canonical) {
      e.set(config, canonical, value, base_dir);
      return;
    }
  }
}

CliConfig parse_config(std::string_view text, const std::filesystem::path& base_dir,
                       const std::string& origin) {
  CliConfig config;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_setting(config, line.substr(0, eq), line.substr(eq + 1), base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

CliConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, path.parent_path(), path.string());
}

void apply_overrides(CliConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override " + in_quotes(o) + " is not KEY=VALUE");
    apply_setting(config, std::string_view(o).substr(0, eq), std::string_view(o).substr(eq + 1), {});
  }
}

void require_corpus(const CliConfig& config) {
  if (!config.corpus) throw ConfigError("data.corpus: no corpus path configured");
  std::error_code ec;
  if (!std::filesystem::is_regular_file(*config.corpus, ec)) {
    throw ConfigError("data.corpus: " + config.corpus->string() + " is not a readable file");
  }
  std::ifstream probe(*config.corpus);
  if (!probe) throw ConfigError("data.corpus: cannot open " + config.corpus->string());
}

}  // namespace basis
