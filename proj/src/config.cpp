#include "menode/config.hpp"

#include "menode/error.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>
#include <type_traits>

namespace menode {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw ContractError("config key '" + key + "': '" + value + "' is not " + expected);
}

void parse_into(const std::string& key, const std::string& v, double& out) {
  char* end = nullptr;
  errno = 0;
  out = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE) bad_value(key, v, "a number");
}

void parse_into(const std::string& key, const std::string& v, std::size_t& out) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    bad_value(key, v, "a non-negative integer");
  }
  errno = 0;
  out = std::strtoull(v.c_str(), nullptr, 10);
  if (errno == ERANGE) bad_value(key, v, "a representable integer");
}

void parse_into(const std::string& key, const std::string& v, bool& out) {
  if (v == "true" || v == "1") {
    out = true;
  } else if (v == "false" || v == "0") {
    out = false;
  } else {
    bad_value(key, v, "a boolean (true/false)");
  }
}

void parse_into(const std::string& key, const std::string& v, std::vector<std::size_t>& out) {
  out.clear();
  if (v.empty() || v == "none") return;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t n = 0;
    parse_into(key, trim(item), n);
    out.push_back(n);
  }
}

template <class Enum, class Parse>
void parse_enum(const std::string& key, const std::string& v, Enum& out, Parse parse) {
  try {
    out = parse(v);
  } catch (const ContractError&) {
    bad_value(key, v, "a valid choice");
  }
}

void parse_into(const std::string& key, const std::string& v, GammaKind& out) {
  parse_enum(key, v, out, parse_gamma_kind);
}
void parse_into(const std::string& key, const std::string& v, Activation& out) {
  parse_enum(key, v, out, parse_activation);
}
void parse_into(const std::string& key, const std::string& v, OdeMethod& out) {
  parse_enum(key, v, out, parse_ode_method);
}

std::string render(double v) { return format_double(v); }
std::string render(std::size_t v) { return std::to_string(v); }
std::string render(bool v) { return v ? "true" : "false"; }
std::string render(GammaKind v) { return std::string(to_string(v)); }
std::string render(Activation v) { return std::string(to_string(v)); }
std::string render(OdeMethod v) { return std::string(to_string(v)); }
std::string render(const std::vector<std::size_t>& v) {
  if (v.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

template <class C, class F>
void visit_fields(C& c, F&& f) {
  using T = std::remove_const_t<C>;
  if constexpr (std::is_same_v<T, ModelConfig>) {
    f("latent_dim", c.latent_dim);
    f("effect_dim", c.effect_dim);
    f("obs_dim", c.obs_dim);
    f("obs_window", c.obs_window);
    f("identity_mode", c.identity_mode);
    f("gamma", c.gamma);
    f("encoder_hidden", c.encoder_hidden);
    f("gamma_hidden", c.gamma_hidden);
    f("decoder_hidden", c.decoder_hidden);
    f("activation", c.activation);
    f("obs_sigma", c.obs_sigma);
    f("sigma0", c.sigma0);
    f("prior_z0_sigma", c.prior_z0_sigma);
    f("prior_w_sigma", c.prior_w_sigma);
    f("init_beta", c.init_beta);
    f("init_sigma_b", c.init_sigma_b);
    f("method", c.method);
    f("substeps", c.substeps);
  } else if constexpr (std::is_same_v<T, TrainConfig>) {
    f("n_z0", c.n_z0);
    f("n_w", c.n_w);
    f("accept_k", c.accept_k);
    f("learning_rate", c.learning_rate);
    f("epochs", c.epochs);
    f("batch_size", c.batch_size);
    f("seed", c.seed);
    f("kl_weight", c.kl_weight);
  } else {
    static_assert(std::is_same_v<T, ToySpec>);
    f("mu", c.mu);
    f("sigma", c.sigma);
    f("beta", c.beta);
    f("sigma_b", c.sigma_b);
    f("n_subjects", c.n_subjects);
    f("train_frac", c.train_frac);
    f("n_times", c.n_times);
    f("t_max", c.t_max);
    f("n_observed", c.n_observed);
    f("jitter", c.jitter);
  }
}

template <class C>
bool apply_impl(C& c, const std::string& key, const std::string& value) {
  bool found = false;
  visit_fields(c, [&](const char* name, auto& field) {
    if (!found && key == name) {
      parse_into(key, value, field);
      found = true;
    }
  });
  return found;
}

template <class C>
std::vector<KeyValue> settings_impl(const C& c) {
  std::vector<KeyValue> out;
  visit_fields(c, [&](const char* name, const auto& field) {
    out.emplace_back(name, render(field));
  });
  return out;
}

}  // namespace

std::vector<KeyValue> parse_key_values(std::istream& in) {
  std::vector<KeyValue> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ContractError("config line " + std::to_string(number) + ": expected key = value");
    }
    std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      throw ContractError("config line " + std::to_string(number) + ": empty key");
    }
    out.emplace_back(std::move(key), trim(t.substr(eq + 1)));
  }
  return out;
}

bool apply_setting(ModelConfig& c, const std::string& k, const std::string& v) {
  return apply_impl(c, k, v);
}
bool apply_setting(TrainConfig& c, const std::string& k, const std::string& v) {
  return apply_impl(c, k, v);
}
bool apply_setting(ToySpec& c, const std::string& k, const std::string& v) {
  return apply_impl(c, k, v);
}

std::vector<KeyValue> settings(const ModelConfig& c) { return settings_impl(c); }
std::vector<KeyValue> settings(const TrainConfig& c) { return settings_impl(c); }
std::vector<KeyValue> settings(const ToySpec& c) { return settings_impl(c); }

void apply_settings(RunConfig& config, const std::vector<KeyValue>& values) {
  for (const auto& [key, value] : values) {
    const bool known = apply_setting(config.model, key, value) ||
                       apply_setting(config.train, key, value) ||
                       apply_setting(config.toy, key, value);
    if (!known) throw ContractError("unknown config key '" + key + "'");
  }
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open config file " + path.string());
  apply_settings(base, parse_key_values(in));
  return base;
}

}  // namespace menode
