#include "menode/calibration.hpp"
#include "menode/checkpoint.hpp"
#include "menode/cli.hpp"
#include "menode/config.hpp"
#include "menode/dataset.hpp"
#include "menode/error.hpp"
#include "menode/metrics.hpp"
#include "menode/sde.hpp"
#include "menode/trainer.hpp"

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace menode;

namespace {

// Series as a list of rows.
std::vector<std::vector<double>> rows_of(const Series& s) {
  std::vector<std::vector<double>> out(s.n_times());
  for (std::size_t t = 0; t < s.n_times(); ++t) out[t].assign(s.row(t).begin(), s.row(t).end());
  return out;
}

template <class Config>
void apply_kwargs(Config& config, const py::kwargs& kwargs) {
  for (const auto& [key, value] : kwargs) {
    const auto k = py::str(key).cast<std::string>();
    std::string v = py::str(value).cast<std::string>();
    if (py::isinstance<py::bool_>(value)) v = py::cast<bool>(value) ? "true" : "false";
    if (py::isinstance<py::list>(value) || py::isinstance<py::tuple>(value)) {
      v.clear();
      for (const auto& item : value) v += (v.empty() ? "" : ",") + py::str(item).cast<std::string>();
      if (v.empty()) v = "none";
    }
    if (!apply_setting(config, k, v)) throw ContractError("unknown setting '" + k + "'");
  }
}

template <class Config>
py::dict as_dict(const Config& config) {
  py::dict d;
  for (const auto& [k, v] : settings(config)) d[py::str(k)] = v;
  return d;
}

}  // namespace

PYBIND11_MODULE(menode, m) {
  m.doc() = "Mixed-effects neural ODEs with ABC training";

  // later registrations are tried first, so the base goes in first
  const auto& base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());

  py::class_<SubjectInfo>(m, "SubjectInfo")
      .def_readonly("subject_id", &SubjectInfo::subject_id)
      .def_readonly("group_id", &SubjectInfo::group_id)
      .def_readonly("true_z0", &SubjectInfo::true_z0)
      .def_readonly("true_w", &SubjectInfo::true_w);

  py::class_<PanelDataset>(m, "PanelDataset")
      .def_property_readonly("times", &PanelDataset::times)
      .def_property_readonly("split", &PanelDataset::split)
      .def_property_readonly("obs_dim", &PanelDataset::obs_dim)
      .def("__len__", &PanelDataset::size)
      .def("info", &PanelDataset::info)
      .def("observed", [](const PanelDataset& d, std::size_t i) { return rows_of(d.observed(i)); })
      .def("full", [](const PanelDataset& d, std::size_t i) { return rows_of(d.full(i)); })
      .def_property_readonly("heldout_reads", &PanelDataset::heldout_reads)
      .def("to_csv",
           [](const PanelDataset& d) {
             std::ostringstream out;
             write_csv(d, out);
             return out.str();
           })
      .def("save", py::overload_cast<const PanelDataset&, const std::filesystem::path&>(&write_csv));

  m.def("read_csv", py::overload_cast<const std::filesystem::path&>(&read_csv), py::arg("path"));
  m.def(
      "split_subjects",
      [](const PanelDataset& d, double frac) {
        auto s = split_subjects(d, frac);
        return py::make_tuple(std::move(s.train), std::move(s.test));
      },
      py::arg("data"), py::arg("train_frac") = 0.8);
  m.def(
      "generate_toy",
      [](std::uint64_t seed, const py::kwargs& kwargs) {
        ToySpec spec;
        apply_kwargs(spec, kwargs);
        return generate_toy(spec, seed);
      },
      py::arg("seed"));
  m.def("generate_grouped_2d",
        py::overload_cast<std::size_t, std::size_t, std::uint64_t>(&generate_grouped_2d),
        py::arg("n_groups"), py::arg("n_subjects"), py::arg("seed"));

  m.def(
      "model_config",
      [](bool toy, const py::kwargs& kwargs) {
        ModelConfig c = toy ? ModelConfig::toy() : ModelConfig{};
        apply_kwargs(c, kwargs);
        c.validate();
        return as_dict(c);
      },
      py::arg("toy") = false);

  py::class_<RecoveredParams>(m, "RecoveredParams")
      .def_readonly("mu", &RecoveredParams::mu)
      .def_readonly("sigma", &RecoveredParams::sigma)
      .def_readonly("beta", &RecoveredParams::beta)
      .def_readonly("sigma_b", &RecoveredParams::sigma_b);

  py::class_<MeNodeModel>(m, "Model")
      .def(py::init([](bool toy, std::uint64_t seed, const py::kwargs& kwargs) {
             ModelConfig c = toy ? ModelConfig::toy() : ModelConfig{};
             apply_kwargs(c, kwargs);
             return MeNodeModel(c, seed);
           }),
           py::arg("toy") = false, py::arg("seed") = 0)
      .def_property_readonly("config", [](const MeNodeModel& m) { return as_dict(m.config()); })
      .def_property_readonly("parameter_count", &MeNodeModel::parameter_count)
      .def("recover", &recover_parameters, py::arg("data"))
      .def(
          "train",
          [](MeNodeModel& model, const PanelDataset& data, const py::kwargs& kwargs) {
            TrainConfig tc;
            apply_kwargs(tc, kwargs);
            std::ostringstream log;
            {
              py::gil_scoped_release release;
              train(model, data, tc, &log);
            }
            return log.str();
          },
          py::arg("data"), "Train in place; returns the epoch log")
      .def(
          "reconstruction_mse",
          [](const MeNodeModel& model, const PanelDataset& data, std::size_t n_z0,
             std::size_t n_w, std::uint64_t seed) {
            return reconstruction_mse(model, data, n_z0, n_w, seed);
          },
          py::arg("data"), py::arg("n_z0") = 10, py::arg("n_w") = 10, py::arg("seed") = 0)
      .def(
          "calibrate_predict",
          [](const MeNodeModel& model, const PanelDataset& data, std::size_t i,
             std::size_t n_candidates, std::uint64_t seed) {
            const auto calib =
                calibrate(model, data.observed(i), data.observed_grid(model.config().substeps),
                          n_candidates, seed);
            const Series pred = predict(model, calib, data.full_grid(model.config().substeps));
            return py::make_tuple(calib.mse, rows_of(pred));
          },
          py::arg("data"), py::arg("subject"), py::arg("n_candidates") = 256,
          py::arg("seed") = 0)
      .def(
          "save",
          [](const MeNodeModel& model, const std::filesystem::path& path) {
            save_checkpoint(path, model, TrainConfig{}, Adam{}, 0);
          },
          py::arg("path"))
      .def_static(
          "load",
          [](const std::filesystem::path& path) { return load_checkpoint(path).model; },
          py::arg("path"));

  m.def(
      "wong_zakai_moments",
      [](std::function<double(double, double)> f, std::function<double(double, double)> g,
         double z0, double t_max, std::size_t n_times, std::size_t n_paths, std::uint64_t seed,
         bool stratonovich) {
        const TimeGrid grid = TimeGrid::uniform(0.0, t_max, n_times, 100);
        MomentCurve c;
        {
          // the callbacks take the lock themselves on whichever thread runs them
          py::gil_scoped_release release;
          c = stratonovich ? stratonovich_ensemble(f, g, z0, grid, n_paths, seed)
                           : wong_zakai_ensemble(f, g, z0, grid, n_paths, seed);
        }
        return py::make_tuple(c.times, c.mean, c.variance);
      },
      py::arg("f"), py::arg("g"), py::arg("z0"), py::arg("t_max") = 3.0,
      py::arg("n_times") = 4, py::arg("n_paths") = 1000, py::arg("seed") = 0,
      py::arg("stratonovich") = false,
      "Ensemble moments of the random-coefficient ODE (or the Stratonovich SDE)");

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "menode");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out;
        std::ostringstream err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command line tool; returns (exit code, stdout, stderr)");
}
