#include "proemb/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace proemb {

namespace {

constexpr int kStageConfounders = 0;
constexpr int kStageGraph = 1;
constexpr int kStageBaseline = 2;
constexpr int kStagePeer = 3;
constexpr int kStageProxies = 4;
constexpr int kStageOutcomes = 5;
constexpr int kStageEmbedding = 6;
constexpr int kStageEstimators = 7;

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> tags = {"oracle", "zero", "naive-ols", "tsls",
                                                "t-lr",   "t-gb", "t-nn",      "pe-lr",
                                                "pe-gb",  "pe-nn"};
  return tags;
}

std::string num_str(double x) { return nlohmann::json(x).dump(); }

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(sep);
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

BaseLearnerSpec learner_spec_for(const std::string& tag) {
  if (tag.ends_with("-lr")) return LinearRidgeSpec{};
  if (tag.ends_with("-gb")) return GradBoostSpec{};
  if (tag.ends_with("-nn")) return MlpSpec{};
  throw std::invalid_argument("no base learner for method: " + tag);
}

double std_dev(const std::vector<double>& xs, double mean) {
  if (xs.empty()) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

void hash_doubles(std::uint64_t& h, const double* data, std::size_t count) {
  h = fnv1a(data, count * sizeof(double), h);
}

void hash_ints(std::uint64_t& h, const std::vector<int>& v) {
  h = fnv1a(v.data(), v.size() * sizeof(int), h);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (n < 2 || d < 1 || V < d || doc_len < 1) throw std::invalid_argument("config: bad panel dims");
  if (graph == GraphModel::Dyadic && n % 2 != 0) {
    throw std::invalid_argument("config: dyadic graph needs even n");
  }
  if (graph == GraphModel::HomophilyBA && (m0 < 2 || m < 1 || m > m0 || m0 > n)) {
    throw std::invalid_argument("config: bad (m0, m) for homophily-ba");
  }
  if (peer_activation < 0.0 || peer_activation > 1.0) {
    throw std::invalid_argument("config: peer_activation outside [0, 1]");
  }
  if (S < 1) throw std::invalid_argument("config: S must be >= 1");
  if (methods.empty()) throw std::invalid_argument("config: empty method list");
  for (const auto& tag : methods) check_method_tag(tag);
  if (sweep_dims.empty()) throw std::invalid_argument("config: empty sweep dim list");
  for (int dim : sweep_dims) {
    // feasibility vs 2V is checked where the sweep actually runs
    if (dim < 1) throw std::invalid_argument("config: sweep dims must be >= 1");
  }
  if (embed_dim < 1 || embed_dim > 2 * V) {
    throw std::invalid_argument("config: embed_dim outside [1, 2V]");
  }
  if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
  if (lambda_rb < 0.0 || lr <= 0.0 || epochs < 1 || batch < 1) {
    throw std::invalid_argument("config: bad training knobs");
  }
}

std::string ExperimentConfig::setting_label() const {
  std::string label = "h=";
  label += (h == HRule::Max ? "max" : "mean");
  label += ",bu=";
  label += (beta_u == BetaUDist::N03 ? "n03" : "n52");
  return label;
}

bool method_needs_embedding(const std::string& tag) { return tag.starts_with("pe-"); }

void check_method_tag(const std::string& tag) {
  const auto& tags = known_methods();
  if (std::find(tags.begin(), tags.end(), tag) == tags.end()) {
    throw std::invalid_argument("unknown method tag: " + tag + " (known: " + join(tags, ' ') + ")");
  }
}

void set_config_key(ExperimentConfig& c, const std::string& key, const std::string& value) {
  auto as_int = [&] { return std::stoi(value); };
  auto as_u64 = [&] { return std::stoull(value); };
  auto as_double = [&] { return std::stod(value); };
  if (key == "n") c.n = as_int();
  else if (key == "d") c.d = as_int();
  else if (key == "V") c.V = as_int();
  else if (key == "doc_len") c.doc_len = as_int();
  else if (key == "graph") {
    if (value == "dyadic") c.graph = GraphModel::Dyadic;
    else if (value == "homophily-ba") c.graph = GraphModel::HomophilyBA;
    else throw std::invalid_argument("config: graph must be dyadic or homophily-ba");
  } else if (key == "m0") c.m0 = as_int();
  else if (key == "m") c.m = as_int();
  else if (key == "h") {
    if (value == "max") c.h = HRule::Max;
    else if (value == "mean") c.h = HRule::Mean;
    else throw std::invalid_argument("config: h must be max or mean");
  } else if (key == "tau") c.tau = as_double();
  else if (key == "beta_y") c.beta_y = as_double();
  else if (key == "beta_u") {
    if (value == "n03") c.beta_u = BetaUDist::N03;
    else if (value == "n52") c.beta_u = BetaUDist::N52;
    else throw std::invalid_argument("config: beta_u must be n03 or n52");
  } else if (key == "peer_activation") c.peer_activation = as_double();
  else if (key == "S") c.S = as_int();
  else if (key == "methods") c.methods = split(value, ',');
  else if (key == "sweep_dims") {
    c.sweep_dims.clear();
    for (const auto& tok : split(value, ',')) c.sweep_dims.push_back(std::stoi(tok));
  } else if (key == "master_seed") c.master_seed = as_u64();
  else if (key == "threads") c.threads = as_int();
  else if (key == "embed_dim") c.embed_dim = as_int();
  else if (key == "lambda_rb") c.lambda_rb = as_double();
  else if (key == "lr") c.lr = as_double();
  else if (key == "epochs") c.epochs = as_int();
  else if (key == "batch") c.batch = as_int();
  else throw std::invalid_argument("config: unknown key: " + key);
}

std::map<std::string, std::string> config_to_kv(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  kv["n"] = std::to_string(c.n);
  kv["d"] = std::to_string(c.d);
  kv["V"] = std::to_string(c.V);
  kv["doc_len"] = std::to_string(c.doc_len);
  kv["graph"] = c.graph == GraphModel::Dyadic ? "dyadic" : "homophily-ba";
  kv["m0"] = std::to_string(c.m0);
  kv["m"] = std::to_string(c.m);
  kv["h"] = c.h == HRule::Max ? "max" : "mean";
  kv["tau"] = num_str(c.tau);
  kv["beta_y"] = num_str(c.beta_y);
  kv["beta_u"] = c.beta_u == BetaUDist::N03 ? "n03" : "n52";
  kv["peer_activation"] = num_str(c.peer_activation);
  kv["S"] = std::to_string(c.S);
  kv["methods"] = join(c.methods, ',');
  {
    std::vector<std::string> dims;
    for (int dim : c.sweep_dims) dims.push_back(std::to_string(dim));
    kv["sweep_dims"] = join(dims, ',');
  }
  kv["master_seed"] = std::to_string(c.master_seed);
  kv["threads"] = std::to_string(c.threads);
  kv["embed_dim"] = std::to_string(c.embed_dim);
  kv["lambda_rb"] = num_str(c.lambda_rb);
  kv["lr"] = num_str(c.lr);
  kv["epochs"] = std::to_string(c.epochs);
  kv["batch"] = std::to_string(c.batch);
  return kv;
}

ExperimentConfig config_from_kv(const std::map<std::string, std::string>& kv) {
  ExperimentConfig c;
  for (const auto& [key, value] : kv) set_config_key(c, key, value);
  return c;
}

std::map<std::string, std::string> parse_kv_stream(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string{};
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    std::string trimmed = trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    kv[trim(trimmed.substr(0, eq))] = trim(trimmed.substr(eq + 1));
  }
  return kv;
}

void write_config_lock(const ExperimentConfig& config, std::ostream& out) {
  for (const auto& [key, value] : config_to_kv(config)) {
    out << key << " = " << value << '\n';
  }
}

std::string config_digest(const ExperimentConfig& config) {
  // threads is an execution knob, not part of the experiment's identity
  auto kv = config_to_kv(config);
  kv.erase("threads");
  std::ostringstream lock;
  for (const auto& [key, value] : kv) lock << key << " = " << value << '\n';
  const std::string text = lock.str();
  std::uint64_t h = fnv1a(text.data(), text.size());
  std::ostringstream hex;
  hex << std::hex << h;
  return hex.str();
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

RngStream stage_rng(std::uint64_t master, int run, int stage) {
  return RngStream(master, static_cast<std::uint64_t>(run) * 16 + static_cast<std::uint64_t>(stage));
}

RunPanel make_run_panel(const ExperimentConfig& config, int run) {
  RunPanel panel;
  {
    RngStream rng = stage_rng(config.master_seed, run, kStageConfounders);
    panel.conf = gen_confounders(config.n, config.d, rng);
  }
  {
    RngStream rng = stage_rng(config.master_seed, run, kStageGraph);
    panel.g = config.graph == GraphModel::Dyadic
                  ? gen_dyads(panel.conf.U, rng)
                  : gen_homophily_ba(panel.conf.U, config.m0, config.m, rng);
  }
  std::vector<int> y_prev;
  {
    RngStream rng = stage_rng(config.master_seed, run, kStageBaseline);
    Vec alpha_u(config.d);
    for (int k = 0; k < config.d; ++k) alpha_u[k] = rng.gaussian();
    y_prev = gen_baseline_activation(panel.conf, alpha_u, rng);
  }
  {
    RngStream rng = stage_rng(config.master_seed, run, kStagePeer);
    y_prev = apply_peer_activation(panel.g, y_prev, config.peer_activation, rng);
  }
  {
    RngStream rng = stage_rng(config.master_seed, run, kStageProxies);
    panel.proxies = gen_proxies(panel.conf, panel.g, config.V, config.doc_len, rng);
  }
  {
    RngStream rng = stage_rng(config.master_seed, run, kStageOutcomes);
    Vec beta_u(config.d);
    for (int k = 0; k < config.d; ++k) {
      beta_u[k] = config.beta_u == BetaUDist::N03 ? rng.gaussian(0.0, 3.0) : rng.gaussian(5.0, 2.0);
    }
    std::vector<int> treat = compute_treatments(panel.g, y_prev, config.h);
    panel.outcomes = gen_outcomes(panel.conf, y_prev, treat, beta_u, config.beta_y, config.tau, rng);
  }

  std::uint64_t h = fnv1a(&config.n, sizeof(config.n));
  const std::size_t edges = panel.g.edge_count();
  h = fnv1a(&edges, sizeof(edges), h);
  hash_ints(h, panel.outcomes.y_prev);
  hash_ints(h, panel.outcomes.treat);
  hash_doubles(h, panel.outcomes.y_fact.data(), static_cast<std::size_t>(panel.outcomes.y_fact.size()));
  hash_doubles(h, panel.proxies.Z.data(), static_cast<std::size_t>(panel.proxies.Z.size()));
  hash_doubles(h, panel.proxies.Zngb.data(), static_cast<std::size_t>(panel.proxies.Zngb.size()));
  panel.digest = h;
  return panel;
}

ProEmbModel train_run_embedding(const ExperimentConfig& config, const RunPanel& panel,
                                int run, int embed_dim) {
  RngStream rng = stage_rng(config.master_seed, run, kStageEmbedding);
  ProEmbModel model = make_proemb_model(config.V, embed_dim, rng);
  TrainConfig tc;
  tc.lr = config.lr;
  tc.epochs = config.epochs;
  tc.lambda_rb = config.lambda_rb;
  tc.batch = config.batch;
  tc.d = embed_dim;
  train(model, panel.proxies.Ztilde, panel.outcomes.treat, tc, rng);
  return model;
}

double estimate_method(const std::string& tag, const RunPanel& panel, const Mat* embedding,
                       const ExperimentConfig& config, int run) {
  check_method_tag(tag);
  const auto& out = panel.outcomes;
  if (tag == "oracle") {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < out.y_fact.size(); ++i) {
      const double sign = out.treat[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
      acc += sign * (out.y_fact[i] - out.y_cf[i]);
    }
    return acc / static_cast<double>(out.y_fact.size());
  }
  if (tag == "zero") return 0.0;
  if (tag == "naive-ols") {
    return fit_ols_slope(out.y_fact, out.treat, Mat(out.y_fact.size(), 0));
  }
  if (tag == "tsls") {
    return fit_tsls(out.y_fact, out.treat, panel.proxies.Z, panel.proxies.Zngb).theta_hat;
  }

  const std::string tag_seed_salt = tag;
  RngStream rng(config.master_seed ^ fnv1a(tag_seed_salt.data(), tag_seed_salt.size()),
                static_cast<std::uint64_t>(run) * 16 + kStageEstimators);
  const BaseLearnerSpec spec = learner_spec_for(tag);
  if (tag.starts_with("t-")) {
    return fit_naive_tlearner(panel.proxies.Ztilde, out.treat, out.y_fact, spec, rng).ace_hat;
  }
  // pe-* methods: T-learner on the learned embedding.
  if (embedding == nullptr) throw std::invalid_argument(tag + ": embedding required");
  Standardizer std_;
  std_.fit(*embedding);
  Mat X = std_.transform(*embedding);
  TLearnerModel model = fit_tlearner(X, out.treat, out.y_fact, spec, rng);
  return predict_ite(model, X).mean();
}

namespace {

struct RunResult {
  std::vector<double> estimates;  // aligned with config.methods; NaN on failure
  std::vector<std::string> errors;
  std::uint64_t digest = 0;
  bool has_balance = false;
  double balance_first = 0.0;
  double balance_last = 0.0;
  bool panel_failed = false;
};

RunResult execute_run(const ExperimentConfig& config, int run) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  RunResult result;
  result.estimates.assign(config.methods.size(), nan);
  result.errors.assign(config.methods.size(), "");

  RunPanel panel;
  try {
    panel = make_run_panel(config, run);
  } catch (const std::exception& e) {
    result.panel_failed = true;
    for (auto& msg : result.errors) msg = std::string("panel generation: ") + e.what();
    return result;
  }
  result.digest = panel.digest;

  Mat embedding;
  bool embedding_ready = false;
  std::string embedding_error;
  const bool needs_embedding = std::any_of(config.methods.begin(), config.methods.end(),
                                           [](const auto& t) { return method_needs_embedding(t); });
  if (needs_embedding) {
    try {
      ProEmbModel model = train_run_embedding(config, panel, run, config.embed_dim);
      embedding = embed(model, panel.proxies.Ztilde);
      result.has_balance = true;
      result.balance_first = model.trace.front().eval_balance_gap;
      result.balance_last = model.trace.back().eval_balance_gap;
      embedding_ready = true;
    } catch (const std::exception& e) {
      embedding_error = std::string("embedding: ") + e.what();
    }
  }

  for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
    const std::string& tag = config.methods[mi];
    if (method_needs_embedding(tag) && !embedding_ready) {
      result.errors[mi] = embedding_error;
      continue;
    }
    try {
      result.estimates[mi] =
          estimate_method(tag, panel, embedding_ready ? &embedding : nullptr, config, run);
    } catch (const std::exception& e) {
      result.errors[mi] = e.what();
    }
  }
  return result;
}

std::vector<RunResult> execute_all_runs(const ExperimentConfig& config) {
  std::vector<RunResult> results(static_cast<std::size_t>(config.S));
  if (config.threads <= 1 || config.S == 1) {
    for (int run = 0; run < config.S; ++run) {
      results[static_cast<std::size_t>(run)] = execute_run(config, run);
    }
    return results;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int run = next.fetch_add(1);
      if (run >= config.S) return;
      results[static_cast<std::size_t>(run)] = execute_run(config, run);
    }
  };
  std::vector<std::thread> pool;
  const int nthreads = std::min(config.threads, config.S);
  pool.reserve(static_cast<std::size_t>(nthreads));
  for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return results;
}

RmseTable table_from_results(const ExperimentConfig& config, const std::string& setting,
                             const std::vector<RunResult>& results) {
  RmseTable table;
  table.tau = config.tau;
  table.config_digest = config_digest(config);
  table.settings.push_back(setting);
  auto& digests = table.panel_digests[setting];
  auto& gaps = table.balance_gaps[setting];
  for (const auto& r : results) {
    digests.push_back(r.digest);
    if (r.has_balance) gaps.emplace_back(r.balance_first, r.balance_last);
  }
  for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
    MethodRow row;
    row.method = config.methods[mi];
    row.setting = setting;
    std::vector<double> ok;
    for (int run = 0; run < config.S; ++run) {
      const auto& r = results[static_cast<std::size_t>(run)];
      row.estimates.push_back(r.estimates[mi]);
      if (std::isfinite(r.estimates[mi])) {
        ok.push_back(r.estimates[mi]);
      } else {
        ++row.failures;
        row.errors.push_back("run " + std::to_string(run) + ": " + r.errors[mi]);
      }
    }
    if (!ok.empty()) {
      double se = 0.0, mean = 0.0;
      for (double e : ok) {
        se += (e - config.tau) * (e - config.tau);
        mean += e;
      }
      mean /= static_cast<double>(ok.size());
      row.rmse = std::sqrt(se / static_cast<double>(ok.size()));
      row.mean_est = mean;
      row.std_est = std_dev(ok, mean);
    } else {
      row.rmse = std::numeric_limits<double>::quiet_NaN();
      row.mean_est = std::numeric_limits<double>::quiet_NaN();
      row.std_est = std::numeric_limits<double>::quiet_NaN();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace

RmseTable run_experiment(const ExperimentConfig& config) {
  config.validate();
  return table_from_results(config, config.setting_label(), execute_all_runs(config));
}

RmseTable sweep_embedding_dim(const ExperimentConfig& config, const std::vector<int>& dims) {
  config.validate();
  if (dims.empty()) throw std::invalid_argument("sweep: empty dim list");
  for (int dim : dims) {
    if (dim < 1 || dim > 2 * config.V) {
      throw std::invalid_argument("sweep: dim " + std::to_string(dim) + " outside [1, 2V]");
    }
  }
  std::vector<RmseTable> per_dim;
  for (int dim : dims) {
    ExperimentConfig c = config;
    c.embed_dim = dim;
    per_dim.push_back(table_from_results(c, "dim=" + std::to_string(dim), execute_all_runs(c)));
  }
  return merge_tables(per_dim);
}

RmseTable merge_tables(const std::vector<RmseTable>& tables) {
  if (tables.empty()) throw std::invalid_argument("merge_tables: nothing to merge");
  RmseTable out;
  out.tau = tables.front().tau;
  std::vector<std::string> digests;
  for (const auto& t : tables) {
    if (t.tau != out.tau) throw std::invalid_argument("merge_tables: mismatched tau");
    if (digests.empty() || digests.back() != t.config_digest) digests.push_back(t.config_digest);
    for (const auto& s : t.settings) {
      if (std::find(out.settings.begin(), out.settings.end(), s) != out.settings.end()) {
        throw std::invalid_argument("merge_tables: duplicate setting: " + s);
      }
      out.settings.push_back(s);
    }
    out.rows.insert(out.rows.end(), t.rows.begin(), t.rows.end());
    for (const auto& [k, v] : t.panel_digests) out.panel_digests[k] = v;
    for (const auto& [k, v] : t.balance_gaps) out.balance_gaps[k] = v;
  }
  out.config_digest = join(digests, '+');
  return out;
}

void write_table_json(const RmseTable& table, std::ostream& out) {
  nlohmann::json doc;
  doc["tau"] = table.tau;
  doc["config_digest"] = table.config_digest;
  doc["settings"] = table.settings;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table.rows) {
    nlohmann::json jr;
    jr["method"] = row.method;
    jr["setting"] = row.setting;
    jr["rmse"] = row.rmse;
    jr["mean_est"] = row.mean_est;
    jr["std_est"] = row.std_est;
    jr["estimates"] = row.estimates;
    jr["failures"] = row.failures;
    jr["errors"] = row.errors;
    rows.push_back(std::move(jr));
  }
  doc["rows"] = std::move(rows);
  nlohmann::json digests;
  for (const auto& [setting, v] : table.panel_digests) digests[setting] = v;
  doc["panel_digests"] = std::move(digests);
  nlohmann::json gaps;
  for (const auto& [setting, v] : table.balance_gaps) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [first, last] : v) arr.push_back({first, last});
    gaps[setting] = std::move(arr);
  }
  doc["balance_gaps"] = std::move(gaps);
  out << doc.dump(2) << '\n';
}

RmseTable table_from_json(std::istream& in) {
  nlohmann::json doc = nlohmann::json::parse(in);
  RmseTable table;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto num = [&](const nlohmann::json& j) { return j.is_null() ? nan : j.get<double>(); };
  table.tau = doc.at("tau").get<double>();
  table.config_digest = doc.at("config_digest").get<std::string>();
  table.settings = doc.at("settings").get<std::vector<std::string>>();
  for (const auto& jr : doc.at("rows")) {
    MethodRow row;
    row.method = jr.at("method").get<std::string>();
    row.setting = jr.at("setting").get<std::string>();
    row.rmse = num(jr.at("rmse"));
    row.mean_est = num(jr.at("mean_est"));
    row.std_est = num(jr.at("std_est"));
    for (const auto& e : jr.at("estimates")) row.estimates.push_back(num(e));
    row.failures = jr.at("failures").get<int>();
    row.errors = jr.at("errors").get<std::vector<std::string>>();
    table.rows.push_back(std::move(row));
  }
  for (const auto& [setting, v] : doc.at("panel_digests").items()) {
    table.panel_digests[setting] = v.get<std::vector<std::uint64_t>>();
  }
  for (const auto& [setting, v] : doc.at("balance_gaps").items()) {
    auto& gaps = table.balance_gaps[setting];
    for (const auto& pair : v) gaps.emplace_back(pair.at(0).get<double>(), pair.at(1).get<double>());
  }
  return table;
}

void write_table_csv(const RmseTable& table, std::ostream& out) {
  out << "method,setting,rmse,mean_est,std_est,runs,failures\n";
  for (const auto& row : table.rows) {
    out << row.method << ',' << row.setting << ',' << num_str(row.rmse) << ','
        << num_str(row.mean_est) << ',' << num_str(row.std_est) << ',' << row.estimates.size()
        << ',' << row.failures << '\n';
  }
}

void write_table_markdown(const RmseTable& table, std::ostream& out) {
  // Columns: method | tau | runs | failures | one per setting.
  std::vector<std::string> methods;
  for (const auto& row : table.rows) {
    if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) {
      methods.push_back(row.method);
    }
  }
  auto find_row = [&](const std::string& method, const std::string& setting) -> const MethodRow* {
    for (const auto& row : table.rows) {
      if (row.method == method && row.setting == setting) return &row;
    }
    return nullptr;
  };
  auto fmt = [](double x, int prec) {
    std::ostringstream ss;
    ss.precision(prec);
    ss << std::fixed << x;
    return ss.str();
  };

  out << "| method | tau | runs | failures |";
  for (const auto& s : table.settings) out << " rmse (mean ± std) @ " << s << " |";
  out << "\n|---|---|---|---|";
  for (std::size_t i = 0; i < table.settings.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& method : methods) {
    std::size_t runs = 0;
    int failures = 0;
    for (const auto& s : table.settings) {
      if (const MethodRow* row = find_row(method, s)) {
        runs = std::max(runs, row->estimates.size());
        failures += row->failures;
      }
    }
    out << "| " << method << " | " << num_str(table.tau) << " | " << runs << " | " << failures
        << " |";
    for (const auto& s : table.settings) {
      const MethodRow* row = find_row(method, s);
      if (row == nullptr) {
        out << " — |";
      } else {
        out << ' ' << fmt(row->rmse, 3) << " (" << fmt(row->mean_est, 3) << " ± "
            << fmt(row->std_est, 3) << ") |";
      }
    }
    out << '\n';
  }
}

}  // namespace proemb
