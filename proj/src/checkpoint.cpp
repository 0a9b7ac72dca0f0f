#include "menode/checkpoint.hpp"

#include "menode/config.hpp"
#include "menode/error.hpp"

#include <cerrno>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace menode {

namespace {

constexpr const char* kMagic = "menode-checkpoint";

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hex(const std::string& s) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw IntegrityError("checkpoint: bad number '" + s + "'");
  return v;
}

std::size_t parse_count(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw IntegrityError("checkpoint: bad count '" + s + "'");
  }
  return std::strtoull(s.c_str(), nullptr, 10);
}

void write_values(std::ostream& out, std::span<const double> values) {
  for (double v : values) out << ' ' << hex(v);
}

std::vector<double> read_values(std::istringstream& in) {
  std::vector<double> out;
  std::string tok;
  while (in >> tok) out.push_back(parse_hex(tok));
  return out;
}

std::vector<KeyValue> read_pairs(std::istringstream& in) {
  std::vector<KeyValue> out;
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw IntegrityError("checkpoint: malformed setting '" + tok + "'");
    out.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  return out;
}

}  // namespace

std::string serialize_checkpoint(const MeNodeModel& model, const TrainConfig& train,
                                  const Adam& optimizer, std::size_t epochs_done) {
  std::ostringstream out;
  out << kMagic << ' ' << kCheckpointVersion << '\n';
  out << "model";
  for (const auto& [k, v] : settings(model.config())) out << ' ' << k << '=' << v;
  out << "\ntrain";
  for (const auto& [k, v] : settings(train)) out << ' ' << k << '=' << v;
  out << "\nadam " << hex(optimizer.learning_rate()) << ' ' << hex(optimizer.beta1()) << ' '
      << hex(optimizer.beta2()) << ' ' << hex(optimizer.epsilon()) << ' '
      << optimizer.steps() << '\n';
  out << "state epochs_done=" << epochs_done << '\n';

  const auto& params = model.parameters();
  const auto& names = model.parameter_names();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out << "param " << names[i] << ' ';
    const auto& shape = params[i].shape();
    if (shape.empty()) out << "scalar";
    for (std::size_t d = 0; d < shape.size(); ++d) out << (d ? "x" : "") << shape[d];
    write_values(out, params[i].values());
    out << '\n';
  }
  for (std::size_t i = 0; i < optimizer.first_moments().size(); ++i) {
    out << "m " << i;
    write_values(out, optimizer.first_moments()[i]);
    out << "\nv " << i;
    write_values(out, optimizer.second_moments()[i]);
    out << '\n';
  }
  std::string body = out.str();
  char sum[32];
  std::snprintf(sum, sizeof sum, "%016" PRIx64, fnv1a(body));
  body += "checksum ";
  body += sum;
  body += '\n';
  return body;
}

Checkpoint deserialize_checkpoint(const std::string& text) {
  const auto first_nl = text.find('\n');
  {
    std::istringstream head(text.substr(0, first_nl));
    std::string magic;
    std::string version;
    head >> magic >> version;
    if (magic != kMagic) throw IntegrityError("not a checkpoint file");
    if (version != std::to_string(kCheckpointVersion)) {
      throw UnsupportedVersionError("unsupported checkpoint version '" + version +
                                    "' (this build reads version " +
                                    std::to_string(kCheckpointVersion) + ")");
    }
  }

  const auto sum_pos = text.rfind("checksum ");
  if (sum_pos == std::string::npos || (sum_pos > 0 && text[sum_pos - 1] != '\n')) {
    throw IntegrityError("checkpoint truncated: checksum line missing");
  }
  const std::string body = text.substr(0, sum_pos);
  std::string stored = text.substr(sum_pos + 9);
  while (!stored.empty() && (stored.back() == '\n' || stored.back() == '\r')) stored.pop_back();
  char expect[32];
  std::snprintf(expect, sizeof expect, "%016" PRIx64, fnv1a(body));
  if (stored != expect) throw IntegrityError("checkpoint checksum mismatch");

  std::istringstream lines(body);
  std::string line;
  std::getline(lines, line);  // version, already checked

  ModelConfig model_config;
  TrainConfig train;
  std::vector<double> adam_values;
  std::size_t adam_steps = 0;
  std::size_t epochs_done = 0;
  bool have_model = false;
  std::vector<std::pair<std::string, std::vector<double>>> params;
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;

  while (std::getline(lines, line)) {
    std::istringstream in(line);
    std::string tag;
    in >> tag;
    if (tag == "model") {
      for (const auto& [k, v] : read_pairs(in)) {
        if (!apply_setting(model_config, k, v)) throw IntegrityError("checkpoint: unknown model key " + k);
      }
      have_model = true;
    } else if (tag == "train") {
      for (const auto& [k, v] : read_pairs(in)) {
        if (!apply_setting(train, k, v)) throw IntegrityError("checkpoint: unknown train key " + k);
      }
    } else if (tag == "adam") {
      std::string tok;
      for (int i = 0; i < 4 && in >> tok; ++i) adam_values.push_back(parse_hex(tok));
      in >> tok;
      adam_steps = parse_count(tok);
    } else if (tag == "state") {
      for (const auto& [k, v] : read_pairs(in)) {
        if (k == "epochs_done") epochs_done = parse_count(v);
      }
    } else if (tag == "param") {
      std::string name;
      std::string shape;
      in >> name >> shape;
      params.emplace_back(name + ' ' + shape, read_values(in));
    } else if (tag == "m" || tag == "v") {
      std::string index;
      in >> index;
      auto& list = tag == "m" ? first : second;
      if (parse_count(index) != list.size()) throw IntegrityError("checkpoint: moments out of order");
      list.push_back(read_values(in));
    } else {
      throw IntegrityError("checkpoint: unexpected record '" + tag + "'");
    }
  }
  if (!have_model || adam_values.size() != 4) {
    throw IntegrityError("checkpoint: missing model or optimizer record");
  }

  Checkpoint ck{MeNodeModel(model_config), train,
                Adam(adam_values[0], adam_values[1], adam_values[2], adam_values[3]),
                epochs_done};
  auto& tensors = ck.model.parameters();
  const auto& names = ck.model.parameter_names();
  if (params.size() != tensors.size()) {
    throw IntegrityError("checkpoint holds " + std::to_string(params.size()) +
                         " tensors, the model has " + std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& shape = tensors[i].shape();
    std::string expected = names[i] + ' ';
    if (shape.empty()) expected += "scalar";
    for (std::size_t d = 0; d < shape.size(); ++d) {
      expected += (d ? "x" : "") + std::to_string(shape[d]);
    }
    if (params[i].first != expected || params[i].second.size() != tensors[i].size()) {
      throw IntegrityError("checkpoint tensor '" + params[i].first + "' does not match '" +
                           expected + "'");
    }
    auto dst = tensors[i].mutable_values();
    std::copy(params[i].second.begin(), params[i].second.end(), dst.begin());
  }
  if (first.size() != second.size() || (!first.empty() && first.size() != tensors.size())) {
    throw IntegrityError("checkpoint optimizer moments do not match the parameters");
  }
  ck.optimizer.restore(adam_steps, std::move(first), std::move(second));
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const MeNodeModel& model,
                     const TrainConfig& train, const Adam& optimizer,
                     std::size_t epochs_done) {
  const std::string text = serialize_checkpoint(model, train, optimizer, epochs_done);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ContractError("cannot write checkpoint " + tmp.string());
    out << text;
    if (!out.flush()) throw ContractError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace menode
