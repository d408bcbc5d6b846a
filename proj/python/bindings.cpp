// Python bindings for the proemb core: config plumbing, panel generation,
// embedding training, estimators, and the experiment harness. Configs cross
// the boundary as {key: value} string dicts (the same schema as config files
// and --key flags); tables come back as JSON strings.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "proemb/estimators.hpp"
#include "proemb/harness.hpp"
#include "proemb/numerics.hpp"
#include "proemb/proemb.hpp"
#include "proemb/simdata.hpp"

namespace py = pybind11;
using namespace proemb;

namespace {

using KvMap = std::map<std::string, std::string>;

ExperimentConfig config_from_dict(const KvMap& kv) {
  ExperimentConfig config = config_from_kv(kv);
  config.validate();
  return config;
}

std::string table_json(const RmseTable& table) {
  std::ostringstream out;
  write_table_json(table, out);
  return out.str();
}

}  // namespace

PYBIND11_MODULE(_proemb, m) {
  m.doc() = "Contagion-effect estimation under latent homophily: simulation, "
            "proxy embeddings, estimators, and a seeded experiment harness.";

  // ---- config plumbing ----
  m.def("default_config", [] { return config_to_kv(ExperimentConfig{}); },
        "Default experiment config as a {key: value} dict.");
  m.def("config_digest",
        [](const KvMap& kv) { return config_digest(config_from_dict(kv)); },
        py::arg("config"), "Stable digest of a config (thread count excluded).");

  // ---- panel generation ----
  py::class_<RunPanel>(m, "RunPanel")
      .def_property_readonly("n", [](const RunPanel& p) { return p.conf.n(); })
      .def_property_readonly("U", [](const RunPanel& p) { return p.conf.U; })
      .def_property_readonly("Z", [](const RunPanel& p) { return p.proxies.Z; })
      .def_property_readonly("Zngb", [](const RunPanel& p) { return p.proxies.Zngb; })
      .def_property_readonly("Ztilde", [](const RunPanel& p) { return p.proxies.Ztilde; })
      .def_property_readonly("y_prev", [](const RunPanel& p) { return p.outcomes.y_prev; })
      .def_property_readonly("treat", [](const RunPanel& p) { return p.outcomes.treat; })
      .def_property_readonly("y_fact", [](const RunPanel& p) { return p.outcomes.y_fact; })
      .def_property_readonly("y_cf", [](const RunPanel& p) { return p.outcomes.y_cf; })
      .def_property_readonly("tau", [](const RunPanel& p) { return p.outcomes.tau; })
      .def_property_readonly("digest", [](const RunPanel& p) { return p.digest; })
      .def_property_readonly("edges", [](const RunPanel& p) {
        std::vector<std::pair<int, int>> edges;
        for (int i = 0; i < p.g.n; ++i)
          for (int j : p.g.adj[static_cast<std::size_t>(i)])
            if (j > i) edges.emplace_back(i, j);
        return edges;
      });

  m.def("make_run_panel",
        [](const KvMap& kv, int run) { return make_run_panel(config_from_dict(kv), run); },
        py::arg("config"), py::arg("run") = 0,
        "Generate one run's world (confounders, graph, proxies, outcomes).");

  // ---- embedding ----
  m.def("embed_panel",
        [](const KvMap& kv, const RunPanel& panel, int run, int dim) {
          ExperimentConfig config = config_from_dict(kv);
          if (dim <= 0) dim = config.embed_dim;
          ProEmbModel model = train_run_embedding(config, panel, run, dim);
          return embed(model, panel.proxies.Ztilde);
        },
        py::arg("config"), py::arg("panel"), py::arg("run") = 0, py::arg("dim") = 0,
        py::call_guard<py::gil_scoped_release>(),
        "Train the proxy embedder on one panel and return the n x dim "
        "posterior-mean embedding.");

  // ---- estimators ----
  m.def("estimate_method",
        [](const KvMap& kv, const std::string& tag, const RunPanel& panel, int run,
           py::object embedding) {
          ExperimentConfig config = config_from_dict(kv);
          if (embedding.is_none()) return estimate_method(tag, panel, nullptr, config, run);
          Mat emb = embedding.cast<Mat>();
          return estimate_method(tag, panel, &emb, config, run);
        },
        py::arg("config"), py::arg("method"), py::arg("panel"), py::arg("run") = 0,
        py::arg("embedding") = py::none(),
        "ACE estimate for one method tag on one panel; pe-* methods need an "
        "embedding matrix.");
  m.def("fit_tsls",
        [](const Vec& y, const std::vector<int>& treat, const Mat& Z, const Mat& Zngb,
           double ridge) { return fit_tsls(y, treat, Z, Zngb, ridge).theta_hat; },
        py::arg("y"), py::arg("treat"), py::arg("Z"), py::arg("Zngb"),
        py::arg("ridge") = 0.0, "Two-stage least squares contagion coefficient.");
  m.def("solve_least_squares", &solve_least_squares, py::arg("X"), py::arg("y"),
        py::arg("ridge") = 0.0,
        "Minimum-norm least squares (ridge-regularized when ridge > 0).");

  // ---- harness ----
  m.def("run_experiment",
        [](const KvMap& kv) {
          RmseTable table;
          {
            py::gil_scoped_release release;
            table = run_experiment(config_from_dict(kv));
          }
          return table_json(table);
        },
        py::arg("config"),
        "Run the full S-run experiment; returns the RMSE table as a JSON string.");
  m.def("sweep_embedding_dim",
        [](const KvMap& kv, const std::vector<int>& dims) {
          RmseTable table;
          {
            py::gil_scoped_release release;
            table = sweep_embedding_dim(config_from_dict(kv), dims);
          }
          return table_json(table);
        },
        py::arg("config"), py::arg("dims"),
        "Paired embedding-dimension sweep; returns the RMSE table as a JSON "
        "string.");
}
