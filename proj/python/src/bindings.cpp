#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>
#include <stdexcept>

#include "foc/commands.hpp"
#include "foc/data.hpp"
#include "foc/eval.hpp"
#include "foc/losses.hpp"
#include "foc/tensor.hpp"

namespace py = pybind11;
using foc::nd::Tensor;

namespace {

using Matrix = std::vector<std::vector<double>>;

Tensor to_tensor(const Matrix& m, bool requires_grad = false) {
  const std::size_t rows = m.size();
  const std::size_t cols = rows ? m[0].size() : 0;
  std::vector<double> v;
  v.reserve(rows * cols);
  for (const auto& r : m) {
    if (r.size() != cols) throw std::invalid_argument("ragged matrix");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor({rows, cols}, std::move(v), requires_grad);
}

Matrix to_matrix(std::span<const double> v, std::size_t rows, std::size_t cols) {
  Matrix out(rows, std::vector<double>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i][j] = v[i * cols + j];
  return out;
}

Matrix grad_of(const Tensor& t) {
  const auto g = t.grad();
  return to_matrix(g, t.rows(), t.cols());
}

// Loss value plus the gradient w.r.t. every input.
py::tuple loss_with_grads(const std::vector<Tensor>& inputs, const Tensor& loss) {
  foc::nd::backward(loss);
  py::tuple out(inputs.size() + 1);
  out[0] = loss.item();
  for (std::size_t i = 0; i < inputs.size(); ++i) out[i + 1] = grad_of(inputs[i]);
  return out;
}

foc::ConfusionMatrix to_confusion(const std::vector<std::vector<std::int64_t>>& m) {
  foc::ConfusionMatrix cm;
  cm.rows = m.size();
  cm.cols = cm.rows ? m[0].size() : 0;
  for (const auto& r : m) {
    if (r.size() != cm.cols) throw std::invalid_argument("ragged matrix");
    cm.counts.insert(cm.counts.end(), r.begin(), r.end());
  }
  return cm;
}

foc::RunConfig load_config(const std::string& text) { return foc::parse_run_config_string(text); }

}  // namespace

PYBIND11_MODULE(_foc, m) {
  m.doc() = "Fuzzy overclustering core";

  py::register_exception<foc::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<foc::DataError>(m, "DataError", PyExc_ValueError);

  m.def("version", &foc::version);

  m.def(
      "joint_distribution",
      [](const Matrix& z1, const Matrix& z2) {
        const auto j = foc::joint_distribution(to_tensor(z1), to_tensor(z2));
        return to_matrix(j.p, j.k, j.k);
      },
      py::arg("z1"), py::arg("z2"));
  m.def(
      "mutual_information",
      [](const Matrix& z1, const Matrix& z2) {
        return foc::mutual_information(foc::joint_distribution(to_tensor(z1), to_tensor(z2)));
      },
      py::arg("z1"), py::arg("z2"));
  m.def(
      "mi_loss",
      [](const Matrix& z1, const Matrix& z2) {
        const Tensor a = to_tensor(z1, true), b = to_tensor(z2, true);
        return loss_with_grads({a, b}, foc::mi_loss(a, b));
      },
      py::arg("z1"), py::arg("z2"), "Returns (loss, dz1, dz2).");
  m.def(
      "cross_entropy",
      [](const Matrix& z, const std::vector<int>& labels) {
        const Tensor a = to_tensor(z, true);
        return loss_with_grads({a}, foc::cross_entropy(a, labels));
      },
      py::arg("z"), py::arg("labels"), "Returns (loss, dz).");
  m.def(
      "ce_inverse_pair",
      [](const Matrix& p, const Matrix& q) {
        const Tensor a = to_tensor(p, true), b = to_tensor(q, true);
        return loss_with_grads({a, b}, foc::ce_inverse_pair(a, b));
      },
      py::arg("p"), py::arg("q"), "Returns (loss, dp, dq).");
  m.def(
      "ce_inverse_triplet",
      [](const Matrix& z1, const Matrix& z2, const Matrix& z3) {
        const Tensor a = to_tensor(z1, true), b = to_tensor(z2, true), c = to_tensor(z3, true);
        return loss_with_grads({a, b, c}, foc::ce_inverse_triplet(a, b, c));
      },
      py::arg("z1"), py::arg("z2"), py::arg("z3"), "Returns (loss, dz1, dz2, dz3).");

  m.def(
      "best_permutation_mapping",
      [](const std::vector<std::vector<std::int64_t>>& cm) {
        const auto r = foc::best_permutation_mapping(to_confusion(cm));
        return py::make_tuple(r.mapping.assign, r.accuracy);
      },
      py::arg("confusion"), "Returns (cluster->class list, accuracy).");
  m.def(
      "majority_mapping",
      [](const std::vector<std::vector<std::int64_t>>& cm) { return foc::majority_mapping(to_confusion(cm)).assign; },
      py::arg("confusion"));
  m.def(
      "macro_f1",
      [](const std::vector<int>& pred, const std::vector<int>& ref, std::size_t k) {
        return foc::macro_f1(pred, ref, k);
      },
      py::arg("mapped_pred"), py::arg("ref"), py::arg("num_classes"));
  m.def(
      "consistency",
      [](const std::vector<int>& clusters, const std::vector<int>& components, const std::vector<int>& exclude) {
        const auto r = foc::consistency(clusters, components, exclude);
        py::dict d;
        d["overall"] = r.overall;
        d["cluster_mean"] = r.cluster_mean;
        d["cluster_stddev"] = r.cluster_stddev;
        d["evaluated"] = r.evaluated;
        py::list per;
        for (const auto& c : r.per_cluster) {
          py::dict e;
          e["cluster"] = c.cluster;
          e["size"] = c.size;
          e["consistent"] = c.consistent;
          e["majority_component"] = c.majority_component;
          e["value"] = c.value;
          per.append(e);
        }
        d["per_cluster"] = per;
        return d;
      },
      py::arg("clusters"), py::arg("components"), py::arg("exclude") = std::vector<int>{});

  m.def(
      "gen_data",
      [](const std::string& config, const std::filesystem::path& out) {
        std::ostringstream log;
        foc::cmd_gen_data(load_config(config), out, log);
        return log.str();
      },
      py::arg("config"), py::arg("out"), "Config is INI text. Returns the log.");
  m.def(
      "train",
      [](const std::string& config, const std::filesystem::path& data, const std::filesystem::path& out_dir,
         std::optional<std::filesystem::path> init) {
        std::ostringstream log;
        foc::TrainOutputs r;
        {
          py::gil_scoped_release release;
          r = foc::cmd_train(load_config(config), data, out_dir, init, log);
        }
        py::dict d;
        d["checkpoint"] = r.checkpoint;
        d["metrics_log"] = r.metrics_log;
        d["manifest"] = r.manifest;
        d["log"] = log.str();
        return d;
      },
      py::arg("config"), py::arg("data"), py::arg("out_dir"), py::arg("init") = py::none());
  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& data, const std::string& config) {
        return foc::cmd_eval(checkpoint, data, load_config(config));
      },
      py::arg("checkpoint"), py::arg("data"), py::arg("config") = "", "Returns the metrics JSON text.");
  m.def(
      "report",
      [](const std::filesystem::path& metrics_log, const std::filesystem::path& out,
         std::optional<std::filesystem::path> eval_doc, std::optional<std::filesystem::path> scatter) {
        foc::cmd_report(metrics_log, out, eval_doc, scatter);
      },
      py::arg("metrics_log"), py::arg("out"), py::arg("eval_doc") = py::none(), py::arg("scatter") = py::none());
}
