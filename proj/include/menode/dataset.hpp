#pragma once

#include "menode/ode.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace menode {

// Time-major block of observations: n_times rows of `dim` values.
class Series {
 public:
  Series() = default;
  Series(std::size_t n_times, std::size_t dim);
  Series(std::size_t n_times, std::size_t dim, std::vector<double> values);

  std::size_t n_times() const noexcept { return n_times_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> row(std::size_t t) const {
    return {values_.data() + t * dim_, dim_};
  }
  double operator()(std::size_t t, std::size_t j) const {
    return values_[t * dim_ + j];
  }
  double& operator()(std::size_t t, std::size_t j) {
    return values_[t * dim_ + j];
  }

  // Rows [begin, end).
  Series rows(std::size_t begin, std::size_t end) const;

  friend bool operator==(const Series&, const Series&) = default;

 private:
  std::size_t n_times_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

struct SubjectInfo {
  std::int64_t subject_id = 0;
  std::int64_t group_id = 0;
  std::vector<double> true_z0;  // empty when unknown
  std::vector<double> true_w;   // empty when unknown

  friend bool operator==(const SubjectInfo&, const SubjectInfo&) = default;
};

// Regularly gridded panel: every subject is observed at the same times. The
// first split() times form the observed (interpolation) window, the rest
// are held out for extrapolation scoring.
//
// Held-out observations are only reachable through heldout()/full(), which
// count their reads so tests can assert that fitting and calibration never
// touch them.
class PanelDataset {
 public:
  PanelDataset() = default;
  PanelDataset(std::vector<double> times, std::size_t split, std::size_t obs_dim);

  PanelDataset(const PanelDataset& other);
  PanelDataset& operator=(const PanelDataset& other);
  PanelDataset(PanelDataset&&) noexcept = default;
  PanelDataset& operator=(PanelDataset&&) noexcept = default;

  void add_subject(SubjectInfo info, Series observations);

  const std::vector<double>& times() const noexcept { return times_; }
  std::size_t split() const noexcept { return split_; }
  std::size_t obs_dim() const noexcept { return obs_dim_; }
  std::size_t size() const noexcept { return info_.size(); }
  bool empty() const noexcept { return info_.empty(); }

  const SubjectInfo& info(std::size_t i) const { return info_.at(i); }

  Series observed(std::size_t i) const;
  Series heldout(std::size_t i) const;
  Series full(std::size_t i) const;
  std::size_t heldout_reads() const noexcept;

  TimeGrid observed_grid(std::size_t substeps) const;
  TimeGrid full_grid(std::size_t substeps) const;

  // Subjects [begin, end) as a new dataset.
  PanelDataset subset(std::size_t begin, std::size_t end) const;

  // Raw access for serialization; counts as a held-out read.
  const Series& raw(std::size_t i) const;

  bool same_content(const PanelDataset& other) const;

 private:
  std::vector<double> times_;
  std::size_t split_ = 0;
  std::size_t obs_dim_ = 0;
  std::vector<SubjectInfo> info_;
  std::vector<Series> obs_;
  std::shared_ptr<std::atomic<std::size_t>> heldout_reads_ =
      std::make_shared<std::atomic<std::size_t>>(0);
};

// First round(train_frac * n) subjects for training, the rest for testing.
struct SubjectSplit {
  PanelDataset train;
  PanelDataset test;
};
SubjectSplit split_subjects(const PanelDataset& data, double train_frac);

// The 1-D mixed-effect toy system dz/dt = z w with
// z0 ~ N(mu, sigma), w ~ N(beta, sigma_b).
struct ToySpec {
  double mu = 1.3;
  double sigma = 0.01;
  double beta = 0.3;
  double sigma_b = 0.01;
  std::size_t n_subjects = 1000;
  double train_frac = 0.8;
  std::size_t n_times = 20;
  double t_max = 3.0;
  std::size_t n_observed = 10;
  // Shared grid drawn at random instead of evenly spaced.
  bool jitter = false;

  void validate() const;
};

// Closed-form trajectories z0 exp(w t); ground truth is recorded.
PanelDataset generate_toy(const ToySpec& spec, std::uint64_t seed);

// Planar rotation dz/dt = omega * Rot90(z), omega shared within a group.
struct Grouped2dSpec {
  std::vector<double> omegas;          // one per group
  std::vector<double> angle_lo;        // per group initial angle window
  std::vector<double> angle_hi;
  std::size_t n_subjects = 200;
  std::size_t n_times = 20;
  double t_max = 3.0;
  std::size_t n_observed = 10;
  double noise_sigma = 0.01;

  // The standard 1/4/8 group configurations: omega_k = pi/4 + (k - (n-1)/2) pi/16 and
  // initial angles uniform on [-pi/2, pi/2].
  static Grouped2dSpec standard(std::size_t n_groups, std::size_t n_subjects);
  void validate() const;
};

PanelDataset generate_grouped_2d(const Grouped2dSpec& spec, std::uint64_t seed);
PanelDataset generate_grouped_2d(std::size_t n_groups, std::size_t n_subjects,
                                 std::uint64_t seed);

// CSV with header
//   subject_id,group_id,time,split,x_0..x_{d-1}[,true_z0_*][,true_w_*]
// one row per subject per time, floats at 17 significant digits.
void write_csv(const PanelDataset& data, std::ostream& out);
void write_csv(const PanelDataset& data, const std::filesystem::path& path);
PanelDataset read_csv(std::istream& in);
PanelDataset read_csv(const std::filesystem::path& path);

// 17-significant-digit decimal, the float format of every text artifact.
std::string format_double(double value);

}  // namespace menode
