#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "proemb/estimators.hpp"
#include "proemb/graphgen.hpp"
#include "proemb/proemb.hpp"
#include "proemb/simdata.hpp"

namespace proemb {

enum class BetaUDist { N03, N52 };  // N(0, 3) or N(5, 2) coefficient draws

struct ExperimentConfig {
  int n = 2000;
  int d = 20;        // latent confounder dimension
  int V = 2000;      // proxy vocabulary size
  int doc_len = 50;  // mean document length
  GraphModel graph = GraphModel::HomophilyBA;
  int m0 = 3;
  int m = 3;
  HRule h = HRule::Max;
  double tau = 1.0;
  double beta_y = 0.2;
  BetaUDist beta_u = BetaUDist::N03;
  double peer_activation = 0.3;
  int S = 10;  // number of seeded runs
  std::vector<std::string> methods = {"oracle", "naive-ols", "tsls",
                                      "t-lr",   "t-gb",      "t-nn",
                                      "pe-lr",  "pe-gb",     "pe-nn"};
  std::vector<int> sweep_dims = {20, 100, 500, 2000};
  std::uint64_t master_seed = 20240801;
  int threads = 1;

  // Embedding / training knobs.
  int embed_dim = 20;
  double lambda_rb = 1.0;
  double lr = 1e-3;
  int epochs = 50;
  int batch = 128;

  void validate() const;
  /// Human-readable label for the (h rule, beta_u) setting, used as the
  /// table's "setting" column.
  std::string setting_label() const;
};

/// Known method tags: oracle, zero, naive-ols, tsls, t-{lr,gb,nn},
/// pe-{lr,gb,nn}. Throws on anything else.
bool method_needs_embedding(const std::string& tag);
void check_method_tag(const std::string& tag);

// ---- flat key=value config plumbing (config files, --key flags) ----------
void set_config_key(ExperimentConfig& config, const std::string& key,
                    const std::string& value);
std::map<std::string, std::string> config_to_kv(const ExperimentConfig& config);
ExperimentConfig config_from_kv(const std::map<std::string, std::string>& kv);
/// Lines of `key = value`; '#' starts a comment.
std::map<std::string, std::string> parse_kv_stream(std::istream& in);
void write_config_lock(const ExperimentConfig& config, std::ostream& out);
std::string config_digest(const ExperimentConfig& config);

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ull);

/// One run's generated world: everything every estimator sees.
struct RunPanel {
  ConfounderSet conf;
  EgoNetwork g;
  ProxyPanel proxies;
  OutcomePanel outcomes;
  std::uint64_t digest = 0;
};

/// Deterministic stage-keyed stream: (master, run * 16 + stage).
RngStream stage_rng(std::uint64_t master, int run, int stage);

RunPanel make_run_panel(const ExperimentConfig& config, int run);

/// Trains the ProEmb embedder for one run (stage-6 stream) at the given
/// latent dimension and returns the trained model.
ProEmbModel train_run_embedding(const ExperimentConfig& config, const RunPanel& panel,
                                int run, int embed_dim);

/// ACE estimate for one method on one run. Methods with the pe- prefix
/// require a non-null embedding matrix (n x embed_dim).
double estimate_method(const std::string& tag, const RunPanel& panel, const Mat* embedding,
                       const ExperimentConfig& config, int run);

struct MethodRow {
  std::string method;
  std::string setting;
  double rmse = 0.0;
  double mean_est = 0.0;
  double std_est = 0.0;  // population std across successful runs
  std::vector<double> estimates;  // indexed by run; failures hold NaN
  int failures = 0;
  std::vector<std::string> errors;  // one message per failed run
};

struct RmseTable {
  double tau = 0.0;
  std::string config_digest;
  std::vector<std::string> settings;
  std::vector<MethodRow> rows;
  // Per setting: per-run panel digests (pairing check for sweeps).
  std::map<std::string, std::vector<std::uint64_t>> panel_digests;
  // Per setting: per-run (epoch-0, final) held-out balance gaps when an
  // embedding was trained.
  std::map<std::string, std::vector<std::pair<double, double>>> balance_gaps;
};

RmseTable run_experiment(const ExperimentConfig& config);
RmseTable sweep_embedding_dim(const ExperimentConfig& config, const std::vector<int>& dims);
/// Row-wise union of tables sharing the same tau (multi-setting reports).
RmseTable merge_tables(const std::vector<RmseTable>& tables);

void write_table_json(const RmseTable& table, std::ostream& out);
void write_table_csv(const RmseTable& table, std::ostream& out);
void write_table_markdown(const RmseTable& table, std::ostream& out);
RmseTable table_from_json(std::istream& in);

}  // namespace proemb
