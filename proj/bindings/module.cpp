// Python bindings for the adaptation library. Matrices cross the boundary as
// numpy float64 arrays (copied); everything heavy stays in C++.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gsfda/checkpoint.hpp"
#include "gsfda/cli.hpp"
#include "gsfda/config.hpp"
#include "gsfda/csv.hpp"
#include "gsfda/gradcheck.hpp"
#include "gsfda/metrics.hpp"
#include "gsfda/pipeline.hpp"

namespace py = pybind11;
using namespace gsfda;

namespace {

py::array_t<double> to_numpy(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D float array");
  Matrix m(static_cast<std::size_t>(a.shape(0)),
           static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "source-free domain adaptation core (C++)";

  py::register_exception<ShapeError>(mod, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);
  py::register_exception<UsageError>(mod, "UsageError", PyExc_RuntimeError);
  py::register_exception<NumericError>(mod, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(mod, "IoError", PyExc_OSError);

  py::class_<NetworkDims>(mod, "NetworkDims")
      .def(py::init<>())
      .def_readwrite("input_dim", &NetworkDims::input_dim)
      .def_readwrite("hidden", &NetworkDims::hidden)
      .def_readwrite("feature", &NetworkDims::feature)
      .def_readwrite("classes", &NetworkDims::classes);

  py::class_<RunConfig>(mod, "RunConfig")
      .def(py::init<>())
      .def_readwrite("dims", &RunConfig::dims)
      .def_readwrite("epochs_source", &RunConfig::epochs_source)
      .def_readwrite("epochs_target", &RunConfig::epochs_target)
      .def_readwrite("epochs_dc", &RunConfig::epochs_dc)
      .def_readwrite("batch_size", &RunConfig::batch_size)
      .def_readwrite("lr_source", &RunConfig::lr_source)
      .def_readwrite("lr_target", &RunConfig::lr_target)
      .def_readwrite("lr_dc", &RunConfig::lr_dc)
      .def_readwrite("momentum", &RunConfig::momentum)
      .def_readwrite("k", &RunConfig::k)
      .def_readwrite("balance_weight", &RunConfig::balance_weight)
      .def_readwrite("lambda_sparsity", &RunConfig::lambda_sparsity)
      .def_readwrite("n_targets", &RunConfig::n_targets)
      .def_readwrite("exemplars_per_domain", &RunConfig::exemplars_per_domain)
      .def_readwrite("seed", &RunConfig::seed)
      .def("validate", &RunConfig::validate);

  py::class_<Dataset>(mod, "Dataset")
      .def(py::init([](py::array_t<double, py::array::c_style | py::array::forcecast> feats,
                       std::vector<int> labels, int domain_id, std::string name) {
             Dataset d;
             d.features = to_matrix(feats);
             d.labels = std::move(labels);
             d.domain_id = domain_id;
             d.name = std::move(name);
             return d;
           }),
           py::arg("features"), py::arg("labels") = std::vector<int>{},
           py::arg("domain_id") = 0, py::arg("name") = "")
      .def_property_readonly("features",
                             [](const Dataset& d) { return to_numpy(d.features); })
      .def_readonly("labels", &Dataset::labels)
      .def_readonly("domain_id", &Dataset::domain_id)
      .def_readonly("name", &Dataset::name)
      .def("__len__", &Dataset::n);

  mod.def("gen_two_moons", &gen_two_moons, py::arg("n"), py::arg("noise_sd"),
          py::arg("rotation_deg"), py::arg("seed"));
  mod.def("gen_blobs", &gen_blobs, py::arg("n"), py::arg("classes"),
          py::arg("centers"), py::arg("shift"), py::arg("spread"),
          py::arg("seed"));
  mod.def(
      "split",
      [](const Dataset& ds, double train_fraction, std::uint64_t seed,
         bool stratified) {
        SplitSpec spec{train_fraction, seed, stratified};
        return split(ds, spec);
      },
      py::arg("dataset"), py::arg("train_fraction") = 0.9, py::arg("seed") = 0,
      py::arg("stratified") = true);
  mod.def("load_csv", &load_csv, py::arg("path"), py::arg("has_labels"));
  mod.def("save_csv", &save_csv, py::arg("path"), py::arg("dataset"));

  py::class_<DomainAttention>(mod, "DomainAttention")
      .def_readonly("domain_id", &DomainAttention::domain_id)
      .def_readonly("scale", &DomainAttention::scale)
      .def_readonly("frozen", &DomainAttention::frozen)
      .def_readonly("e", &DomainAttention::e)
      .def("mask", &DomainAttention::mask);

  py::class_<MaskSet>(mod, "MaskSet")
      .def_readonly("attentions", &MaskSet::attentions)
      .def("n_domains", &MaskSet::n_domains)
      .def("n_targets", &MaskSet::n_targets);
  mod.def("merge_masks", &merge_masks, py::arg("masks"),
          py::arg("current_target"));

  py::class_<ModelState>(mod, "ModelState")
      .def_readonly("masks", &ModelState::masks)
      .def_property_readonly(
          "dims", [](const ModelState& m) { return m.params.dims; });

  py::class_<EpochRecord>(mod, "EpochRecord")
      .def_readonly("epoch", &EpochRecord::epoch)
      .def_readonly("loss", &EpochRecord::loss)
      .def_readonly("acc_source", &EpochRecord::acc_source)
      .def_readonly("acc_target", &EpochRecord::acc_target)
      .def_readonly("h", &EpochRecord::h)
      .def_readonly("acc_n", &EpochRecord::acc_n)
      .def_readonly("acc_np", &EpochRecord::acc_np);

  py::class_<PretrainResult>(mod, "PretrainResult")
      .def_readonly("model", &PretrainResult::model)
      .def_readonly("epochs", &PretrainResult::epochs);
  mod.def("pretrain_source",
          [](const RunConfig& cfg, const Dataset& src) {
            return pretrain_source(cfg, src);
          },
          py::arg("config"), py::arg("source_train"));

  py::class_<Banks>(mod, "Banks")
      .def_property_readonly("features",
                             [](const Banks& b) { return to_numpy(b.features); })
      .def_property_readonly("scores",
                             [](const Banks& b) { return to_numpy(b.scores); })
      .def("__len__", &Banks::n);

  py::class_<AdaptResult>(mod, "AdaptResult")
      .def_readonly("epochs", &AdaptResult::epochs)
      .def_readonly("banks", &AdaptResult::banks);
  mod.def(
      "adapt_target",
      [](const RunConfig& cfg, ModelState& model, std::size_t target_index,
         const Dataset& target_train, const Vector& protect) {
        return adapt_target(cfg, model, target_index, target_train, protect);
      },
      py::arg("config"), py::arg("model"), py::arg("target_index"),
      py::arg("target_train"), py::arg("protect"));

  py::class_<ContinualResult>(mod, "ContinualResult")
      .def_property_readonly(
          "accuracy_matrix",
          [](const ContinualResult& r) { return to_numpy(r.accuracy_matrix); });
  mod.def("adapt_continual", &adapt_continual, py::arg("config"),
          py::arg("model"), py::arg("target_trains"), py::arg("test_sets"));

  py::class_<DomainClassifier>(mod, "DomainClassifier")
      .def_readonly("n_domains", &DomainClassifier::n_domains)
      .def("predict", [](const DomainClassifier& dc,
                         py::array_t<double, py::array::c_style |
                                                 py::array::forcecast> feats) {
        return to_numpy(dc.predict(to_matrix(feats)));
      });
  mod.def("train_domain_classifier", &train_domain_classifier,
          py::arg("config"), py::arg("model"), py::arg("domains"));

  py::class_<EvalResult>(mod, "EvalResult")
      .def_readonly("per_domain", &EvalResult::per_domain)
      .def_readonly("acc_source", &EvalResult::acc_source)
      .def_readonly("acc_target", &EvalResult::acc_target)
      .def_readonly("h", &EvalResult::h);
  mod.def(
      "evaluate",
      [](const ModelState& model, const std::vector<Dataset>& test_sets,
         const std::string& mode, const DomainClassifier* dc, bool refresh_bn) {
        EvalMode m = EvalMode::aware;
        if (mode == "agnostic")
          m = EvalMode::agnostic;
        else if (mode != "aware")
          throw ConfigError("mode must be 'aware' or 'agnostic'");
        return evaluate(model, test_sets, m, dc, refresh_bn);
      },
      py::arg("model"), py::arg("test_sets"), py::arg("mode") = "aware",
      py::arg("dc") = nullptr, py::arg("refresh_bn") = false);

  mod.def("neighbor_purity", &neighbor_purity, py::arg("banks"),
          py::arg("predicted"), py::arg("truth"), py::arg("k") = 3);
  mod.def("harmonic_mean", &harmonic_mean, py::arg("a"), py::arg("b"));

  mod.def(
      "save_checkpoint",
      [](const std::string& path, const ModelState& model,
         const DomainClassifier* dc) { save_checkpoint(path, model, dc); },
      py::arg("path"), py::arg("model"), py::arg("dc") = nullptr);
  py::class_<Checkpoint>(mod, "Checkpoint")
      .def_readonly("model", &Checkpoint::model)
      .def_property_readonly("dc", [](const Checkpoint& c) {
        return c.dc ? py::cast(*c.dc) : py::none().cast<py::object>();
      });
  mod.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  py::class_<GradCheckResult>(mod, "GradCheckResult")
      .def_readonly("name", &GradCheckResult::name)
      .def_readonly("max_err", &GradCheckResult::max_err)
      .def_readonly("trials", &GradCheckResult::trials)
      .def_readonly("pass_", &GradCheckResult::pass);
  mod.def("run_gradchecks", &run_gradchecks, py::arg("seed") = 0,
          py::arg("trials") = 20);

  py::class_<DataConfig>(mod, "DataConfig")
      .def_readonly("generator", &DataConfig::generator)
      .def_readonly("n_per_domain", &DataConfig::n_per_domain)
      .def_readonly("target_rotation_degs", &DataConfig::target_rotation_degs);
  py::class_<FullConfig>(mod, "FullConfig")
      .def_readwrite("run", &FullConfig::run)
      .def_readonly("data", &FullConfig::data);
  mod.def("load_config", &load_config, py::arg("path"));
  py::class_<DataBundle>(mod, "DataBundle")
      .def_readonly("source_train", &DataBundle::source_train)
      .def_readonly("source_test", &DataBundle::source_test)
      .def_readonly("target_trains", &DataBundle::target_trains)
      .def_readonly("target_tests", &DataBundle::target_tests)
      .def("train_sets", &DataBundle::train_sets)
      .def("test_sets", &DataBundle::test_sets);
  mod.def("build_data", &build_data, py::arg("config"));

  mod.def("run_cli", &run_cli, py::arg("args"),
          "run a CLI command in-process; returns the exit code");
}
