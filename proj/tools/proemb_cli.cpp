#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "proemb/harness.hpp"

namespace fs = std::filesystem;
using namespace proemb;

namespace {

struct ConfigCli {
  std::string config_path;
  std::map<std::string, std::string> overrides;
};

// One --key flag per config key, so every file entry is overridable from
// the command line. Master seed also honors PROEMB_SEED.
void add_config_options(CLI::App* cmd, ConfigCli& cli) {
  cmd->set_help_flag("--help", "print help");
  cmd->add_option("--config", cli.config_path, "flat key = value config file")
      ->check(CLI::ExistingFile);
  for (const auto& [key, value] : config_to_kv(ExperimentConfig{})) {
    auto* opt = cmd->add_option_function<std::string>(
        "--" + key, [&cli, key = key](const std::string& v) { cli.overrides[key] = v; },
        "config key (default: " + value + ")");
    if (key == "master_seed") opt->envname("PROEMB_SEED");
  }
}

ExperimentConfig resolve_config(const ConfigCli& cli) {
  ExperimentConfig config;
  if (!cli.config_path.empty()) {
    std::ifstream in(cli.config_path);
    if (!in) throw std::runtime_error("cannot open config file: " + cli.config_path);
    for (const auto& [key, value] : parse_kv_stream(in)) set_config_key(config, key, value);
  }
  for (const auto& [key, value] : cli.overrides) set_config_key(config, key, value);
  config.validate();
  return config;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path.string());
  return out;
}

void write_run_dir(const ExperimentConfig& config, const RmseTable& table, const fs::path& dir) {
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "config.lock");
    write_config_lock(config, out);
  }
  {
    auto out = open_out(dir / "table.json");
    write_table_json(table, out);
  }
  {
    auto out = open_out(dir / "table.csv");
    write_table_csv(table, out);
  }
  {
    auto out = open_out(dir / "table.md");
    write_table_markdown(table, out);
  }
  std::cout << "wrote " << (dir / "table.{json,csv,md}").string() << "\n";
}

int cmd_generate(const ConfigCli& cli, const std::string& out_dir, int run, bool sparse) {
  ExperimentConfig config = resolve_config(cli);
  RunPanel panel = make_run_panel(config, run);
  fs::path dir(out_dir);
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "config.lock");
    write_config_lock(config, out);
  }
  {
    auto out = open_out(dir / "edges.csv");
    panel.g.write_edge_csv(out);
  }
  {
    auto out = open_out(dir / "panel.jsonl");
    write_panel_jsonl(panel.outcomes, out);
  }
  {
    auto out = open_out(dir / (sparse ? "proxies.sparse.csv" : "proxies.csv"));
    write_proxies_csv(panel.proxies, out, sparse);
  }
  std::cout << "run " << run << ": n=" << config.n << " edges=" << panel.g.edge_count()
            << " digest=" << std::hex << panel.digest << std::dec << "\n";
  return 0;
}

int cmd_estimate(const ConfigCli& cli, const std::string& method, int run,
                 const std::string& ite_path) {
  ExperimentConfig config = resolve_config(cli);
  check_method_tag(method);
  RunPanel panel = make_run_panel(config, run);

  Mat embedding;
  const Mat* embedding_ptr = nullptr;
  if (method_needs_embedding(method)) {
    ProEmbModel model = train_run_embedding(config, panel, run, config.embed_dim);
    embedding = embed(model, panel.proxies.Ztilde);
    embedding_ptr = &embedding;
  }
  const double ace = estimate_method(method, panel, embedding_ptr, config, run);

  EstimateReport report;
  report.method = method;
  report.ace_hat = ace;
  report.ite = Vec::Constant(panel.outcomes.y_fact.size(), ace);
  report.seed = config.master_seed;
  report.config_digest = config_digest(config);
  std::cout << report.to_json() << "\n";
  if (!ite_path.empty()) {
    auto out = open_out(ite_path);
    write_ite_csv(report, out);
  }
  return 0;
}

int cmd_report(const std::string& table_path, const std::string& format,
               const std::string& out_path) {
  std::ifstream in(table_path);
  if (!in) throw std::runtime_error("cannot open table: " + table_path);
  RmseTable table = table_from_json(in);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file = open_out(out_path);
    out = &file;
  }
  if (format == "json") write_table_json(table, *out);
  else if (format == "csv") write_table_csv(table, *out);
  else if (format == "markdown") write_table_markdown(table, *out);
  else throw std::runtime_error("format must be json, csv, or markdown");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"proemb: contagion-effect estimation under latent homophily"};
  // long-form help only: the config key `h` needs the short slot
  app.set_help_flag("--help", "print help");
  app.require_subcommand(1);

  ConfigCli gen_cli, est_cli, run_cli, sweep_cli;
  std::string out_dir = "out";
  int run_index = 0;
  bool sparse = false;
  std::string method = "pe-gb";
  std::string ite_path;
  std::string table_path, report_format = "markdown", report_out;

  auto* gen = app.add_subcommand("generate", "emit one run's panel, edge list, and proxies");
  add_config_options(gen, gen_cli);
  gen->add_option("--out", out_dir, "output directory");
  gen->add_option("--run", run_index, "run index (derives the per-run streams)");
  gen->add_flag("--sparse", sparse, "write proxies as node,word,count triplets");

  auto* est = app.add_subcommand("estimate", "one method on one generated panel");
  add_config_options(est, est_cli);
  est->add_option("--method", method, "method tag (oracle, zero, naive-ols, tsls, t-*, pe-*)");
  est->add_option("--run", run_index, "run index");
  est->add_option("--ite", ite_path, "optional per-node ITE CSV path");

  auto* runc = app.add_subcommand("run", "full S-run experiment; writes a run directory");
  add_config_options(runc, run_cli);
  runc->add_option("--out", out_dir, "run directory");

  auto* sweep = app.add_subcommand("sweep", "embedding-dimension sweep over sweep_dims");
  add_config_options(sweep, sweep_cli);
  sweep->add_option("--out", out_dir, "run directory");

  auto* rep = app.add_subcommand("report", "re-render a saved table.json");
  rep->add_option("--table", table_path, "path to table.json")->required();
  rep->add_option("--format", report_format, "json | csv | markdown");
  rep->add_option("--out", report_out, "output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(gen_cli, out_dir, run_index, sparse);
    if (est->parsed()) return cmd_estimate(est_cli, method, run_index, ite_path);
    if (runc->parsed()) {
      ExperimentConfig config = resolve_config(run_cli);
      write_run_dir(config, run_experiment(config), out_dir);
      return 0;
    }
    if (sweep->parsed()) {
      ExperimentConfig config = resolve_config(sweep_cli);
      write_run_dir(config, sweep_embedding_dim(config, config.sweep_dims), out_dir);
      return 0;
    }
    if (rep->parsed()) return cmd_report(table_path, report_format, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
