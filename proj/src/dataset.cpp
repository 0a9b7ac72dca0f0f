#include "menode/dataset.hpp"

#include "menode/error.hpp"
#include "menode/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace menode {

Series::Series(std::size_t n_times, std::size_t dim)
    : n_times_(n_times), dim_(dim), values_(n_times * dim, 0.0) {}

Series::Series(std::size_t n_times, std::size_t dim, std::vector<double> values)
    : n_times_(n_times), dim_(dim), values_(std::move(values)) {
  if (values_.size() != n_times_ * dim_) {
    throw DimensionError("series of " + std::to_string(n_times_) + "x" +
                         std::to_string(dim_) + " given " +
                         std::to_string(values_.size()) + " values");
  }
}

Series Series::rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > n_times_) throw ContractError("series row range out of bounds");
  return Series(end - begin, dim_,
                std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(begin * dim_),
                                    values_.begin() + static_cast<std::ptrdiff_t>(end * dim_)));
}

PanelDataset::PanelDataset(std::vector<double> times, std::size_t split,
                           std::size_t obs_dim)
    : times_(std::move(times)), split_(split), obs_dim_(obs_dim) {
  if (obs_dim_ < 1) throw ContractError("observation dimension must be >= 1");
  if (!times_.empty()) {
    if (split_ < 1 || split_ >= times_.size()) {
      throw ContractError("split index " + std::to_string(split_) +
                          " must lie strictly inside a grid of " +
                          std::to_string(times_.size()) + " times");
    }
    for (std::size_t i = 1; i < times_.size(); ++i) {
      if (!(times_[i] > times_[i - 1])) {
        throw ContractError("dataset times must be strictly increasing");
      }
    }
  }
}

PanelDataset::PanelDataset(const PanelDataset& other)
    : times_(other.times_),
      split_(other.split_),
      obs_dim_(other.obs_dim_),
      info_(other.info_),
      obs_(other.obs_) {}

PanelDataset& PanelDataset::operator=(const PanelDataset& other) {
  if (this != &other) {
    times_ = other.times_;
    split_ = other.split_;
    obs_dim_ = other.obs_dim_;
    info_ = other.info_;
    obs_ = other.obs_;
    heldout_reads_ = std::make_shared<std::atomic<std::size_t>>(0);
  }
  return *this;
}

void PanelDataset::add_subject(SubjectInfo info, Series observations) {
  if (observations.n_times() != times_.size() || observations.dim() != obs_dim_) {
    throw DimensionError("subject " + std::to_string(info.subject_id) +
                         " observations do not match the dataset grid");
  }
  info_.push_back(std::move(info));
  obs_.push_back(std::move(observations));
}

Series PanelDataset::observed(std::size_t i) const {
  return obs_.at(i).rows(0, split_);
}

Series PanelDataset::heldout(std::size_t i) const {
  heldout_reads_->fetch_add(1, std::memory_order_relaxed);
  return obs_.at(i).rows(split_, times_.size());
}

Series PanelDataset::full(std::size_t i) const {
  heldout_reads_->fetch_add(1, std::memory_order_relaxed);
  return obs_.at(i);
}

const Series& PanelDataset::raw(std::size_t i) const {
  heldout_reads_->fetch_add(1, std::memory_order_relaxed);
  return obs_.at(i);
}

std::size_t PanelDataset::heldout_reads() const noexcept {
  return heldout_reads_->load(std::memory_order_relaxed);
}

TimeGrid PanelDataset::observed_grid(std::size_t substeps) const {
  return TimeGrid(std::vector<double>(times_.begin(),
                                      times_.begin() + static_cast<std::ptrdiff_t>(split_)),
                  substeps);
}

TimeGrid PanelDataset::full_grid(std::size_t substeps) const {
  return TimeGrid(times_, substeps);
}

PanelDataset PanelDataset::subset(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw ContractError("subject range out of bounds");
  PanelDataset out(times_, split_, obs_dim_);
  for (std::size_t i = begin; i < end; ++i) out.add_subject(info_[i], obs_[i]);
  return out;
}

bool PanelDataset::same_content(const PanelDataset& other) const {
  return times_ == other.times_ && split_ == other.split_ &&
         obs_dim_ == other.obs_dim_ && info_ == other.info_ && obs_ == other.obs_;
}

SubjectSplit split_subjects(const PanelDataset& data, double train_frac) {
  if (!(train_frac > 0.0 && train_frac <= 1.0)) {
    throw ContractError("train fraction must be in (0, 1]");
  }
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_frac * static_cast<double>(data.size())));
  return {data.subset(0, n_train), data.subset(n_train, data.size())};
}

void ToySpec::validate() const {
  if (!(mu > 0 && sigma > 0 && beta > 0 && sigma_b > 0 && t_max > 0)) {
    throw ContractError("toy spec parameters must be positive");
  }
  if (n_subjects < 1 || n_times < 2) throw ContractError("toy spec sizes too small");
  if (!(train_frac > 0.0 && train_frac <= 1.0)) {
    throw ContractError("toy spec train_frac must be in (0, 1]");
  }
  if (n_observed < 1 || n_observed >= n_times) {
    throw ContractError("toy spec n_observed must lie strictly inside the grid");
  }
}

PanelDataset generate_toy(const ToySpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<double> times;
  if (spec.jitter) {
    Rng rng(derive_seed(seed, 0xA11CE));
    std::uniform_real_distribution<double> u(0.0, spec.t_max);
    times.push_back(0.0);
    while (times.size() < spec.n_times) times.push_back(u(rng));
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    if (times.size() != spec.n_times) throw ContractError("jittered grid collided");
  } else {
    times = TimeGrid::uniform(0.0, spec.t_max, spec.n_times).times();
  }

  PanelDataset data(times, spec.n_observed, 1);
  for (std::size_t i = 0; i < spec.n_subjects; ++i) {
    NormalSampler normal(derive_seed(seed, i));
    const double z0 = spec.mu + spec.sigma * normal();
    const double w = spec.beta + spec.sigma_b * normal();
    Series obs(times.size(), 1);
    for (std::size_t k = 0; k < times.size(); ++k) obs(k, 0) = z0 * std::exp(w * times[k]);
    data.add_subject({static_cast<std::int64_t>(i), 0, {z0}, {w}}, std::move(obs));
  }
  return data;
}

Grouped2dSpec Grouped2dSpec::standard(std::size_t n_groups, std::size_t n_subjects) {
  if (n_groups != 1 && n_groups != 4 && n_groups != 8) {
    throw ContractError("grouped 2-D data supports 1, 4 or 8 groups");
  }
  Grouped2dSpec spec;
  spec.n_subjects = n_subjects;
  for (std::size_t k = 0; k < n_groups; ++k) {
    // fixed spacing, so the spread of omega grows with the group count
    const double offset = static_cast<double>(k) - static_cast<double>(n_groups - 1) / 2.0;
    spec.omegas.push_back(std::numbers::pi / 4.0 + offset * std::numbers::pi / 16.0);
    spec.angle_lo.push_back(-std::numbers::pi / 2.0);
    spec.angle_hi.push_back(std::numbers::pi / 2.0);
  }
  return spec;
}

void Grouped2dSpec::validate() const {
  if (omegas.empty()) throw ContractError("grouped spec needs at least one group");
  if (angle_lo.size() != omegas.size() || angle_hi.size() != omegas.size()) {
    throw ContractError("grouped spec angle windows must match the group count");
  }
  if (n_times < 2 || n_observed < 1 || n_observed >= n_times) {
    throw ContractError("grouped spec n_observed must lie strictly inside the grid");
  }
  if (!(t_max > 0.0) || noise_sigma < 0.0) throw ContractError("bad grouped spec");
}

PanelDataset generate_grouped_2d(const Grouped2dSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto times = TimeGrid::uniform(0.0, spec.t_max, spec.n_times).times();
  PanelDataset data(times, spec.n_observed, 2);
  for (std::size_t i = 0; i < spec.n_subjects; ++i) {
    NormalSampler normal(derive_seed(seed, i));
    auto& rng = normal.engine();
    const std::size_t group =
        std::uniform_int_distribution<std::size_t>(0, spec.omegas.size() - 1)(rng);
    const double angle =
        std::uniform_real_distribution<double>(spec.angle_lo[group], spec.angle_hi[group])(rng);
    const double omega = spec.omegas[group];
    Series obs(times.size(), 2);
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double theta = angle + omega * times[k];
      obs(k, 0) = std::cos(theta) + spec.noise_sigma * normal();
      obs(k, 1) = std::sin(theta) + spec.noise_sigma * normal();
    }
    data.add_subject({static_cast<std::int64_t>(i), static_cast<std::int64_t>(group),
                      {std::cos(angle), std::sin(angle)}, {omega}},
                     std::move(obs));
  }
  return data;
}

PanelDataset generate_grouped_2d(std::size_t n_groups, std::size_t n_subjects,
                                 std::uint64_t seed) {
  return generate_grouped_2d(Grouped2dSpec::standard(n_groups, n_subjects), seed);
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_csv(const PanelDataset& data, std::ostream& out) {
  std::size_t n_z0 = 0;
  std::size_t n_w = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    n_z0 = std::max(n_z0, data.info(i).true_z0.size());
    n_w = std::max(n_w, data.info(i).true_w.size());
  }
  out << "subject_id,group_id,time,split";
  for (std::size_t j = 0; j < data.obs_dim(); ++j) out << ",x_" << j;
  for (std::size_t j = 0; j < n_z0; ++j) out << ",true_z0_" << j;
  for (std::size_t j = 0; j < n_w; ++j) out << ",true_w_" << j;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& info = data.info(i);
    const Series& obs = data.raw(i);
    for (std::size_t k = 0; k < data.times().size(); ++k) {
      out << info.subject_id << ',' << info.group_id << ','
          << format_double(data.times()[k]) << ','
          << (k < data.split() ? "interp" : "extrap");
      for (std::size_t j = 0; j < data.obs_dim(); ++j) out << ',' << format_double(obs(k, j));
      for (std::size_t j = 0; j < n_z0; ++j) {
        out << ',';
        if (j < info.true_z0.size()) out << format_double(info.true_z0[j]);
      }
      for (std::size_t j = 0; j < n_w; ++j) {
        out << ',';
        if (j < info.true_w.size()) out << format_double(info.true_w[j]);
      }
      out << '\n';
    }
  }
}

void write_csv(const PanelDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_csv(data, out);
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_number(const std::string& text, const char* column, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ParseError("line " + std::to_string(line) + ": bad number '" + text +
                         "' in column " + column,
                     line);
  }
  return v;
}

std::int64_t parse_integer(const std::string& text, const char* column, std::size_t line) {
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ParseError("line " + std::to_string(line) + ": bad integer '" + text +
                         "' in column " + column,
                     line);
  }
  return v;
}

// Consecutive columns prefix0, prefix1, ... starting at the first match.
std::vector<std::size_t> indexed_columns(const std::map<std::string, std::size_t>& cols,
                                         const std::string& prefix) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0;; ++j) {
    auto it = cols.find(prefix + std::to_string(j));
    if (it == cols.end()) break;
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

PanelDataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  std::map<std::string, std::size_t> cols;
  for (std::size_t j = 0; j < header.size(); ++j) cols[header[j]] = j;
  for (const char* required : {"subject_id", "group_id", "time", "split", "x_0"}) {
    if (!cols.count(required)) {
      throw ParseError(std::string("missing required column '") + required + "'", 1);
    }
  }
  const auto x_cols = indexed_columns(cols, "x_");
  const auto z0_cols = indexed_columns(cols, "true_z0_");
  const auto w_cols = indexed_columns(cols, "true_w_");
  const std::size_t c_id = cols["subject_id"];
  const std::size_t c_group = cols["group_id"];
  const std::size_t c_time = cols["time"];
  const std::size_t c_split = cols["split"];

  struct Pending {
    SubjectInfo info;
    std::vector<double> times;
    std::vector<bool> observed;
    std::vector<double> values;
  };
  std::vector<Pending> subjects;
  std::map<std::int64_t, std::size_t> index_of;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    const auto id = parse_integer(fields[c_id], "subject_id", line_no);
    auto [it, inserted] = index_of.try_emplace(id, subjects.size());
    if (inserted) {
      Pending p;
      p.info.subject_id = id;
      p.info.group_id = parse_integer(fields[c_group], "group_id", line_no);
      for (auto c : z0_cols)
        if (!fields[c].empty()) p.info.true_z0.push_back(parse_number(fields[c], "true_z0", line_no));
      for (auto c : w_cols)
        if (!fields[c].empty()) p.info.true_w.push_back(parse_number(fields[c], "true_w", line_no));
      subjects.push_back(std::move(p));
    }
    auto& p = subjects[it->second];
    p.times.push_back(parse_number(fields[c_time], "time", line_no));
    const auto& split = fields[c_split];
    if (split != "interp" && split != "extrap") {
      throw ParseError("line " + std::to_string(line_no) + ": split must be interp or extrap",
                       line_no);
    }
    p.observed.push_back(split == "interp");
    for (auto c : x_cols) p.values.push_back(parse_number(fields[c], "x", line_no));
  }

  if (subjects.empty()) return PanelDataset({}, 0, x_cols.size());

  const auto& times = subjects.front().times;
  const auto& observed = subjects.front().observed;
  const auto split = static_cast<std::size_t>(
      std::find(observed.begin(), observed.end(), false) - observed.begin());
  for (std::size_t k = split; k < observed.size(); ++k) {
    if (observed[k]) throw ParseError("interp rows must precede extrap rows", 0);
  }
  PanelDataset data(times, split, x_cols.size());
  for (auto& p : subjects) {
    if (p.times != times || p.observed != observed) {
      throw ParseError("subject " + std::to_string(p.info.subject_id) +
                           " does not share the dataset time grid",
                       0);
    }
    data.add_subject(std::move(p.info),
                     Series(times.size(), x_cols.size(), std::move(p.values)));
  }
  return data;
}

PanelDataset read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'", 0);
  return read_csv(in);
}

}  // namespace menode
