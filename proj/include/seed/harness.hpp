#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "seed/checkpoint.hpp"
#include "seed/config.hpp"
#include "seed/metrics.hpp"
#include "seed/model.hpp"
#include "seed/synth_data.hpp"

namespace seed::harness {

using Clock = std::chrono::steady_clock;
using Log = std::function<void(const std::string&)>;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Results

struct ResultRow {
  std::string experiment;
  std::string config_hash;
  std::string split;
  std::string mode;
  std::size_t epoch = 0;
  MetricsReport m;
  std::size_t params = 0;
  std::uint64_t macs = 0;
  double wall_s = 0.0;
};

inline const std::string& csv_header() {
  static const std::string h = "experiment,config_hash,split,mode,epoch,oa,iou,f1,prec,rec,params,macs,wall_s";
  return h;
}

inline std::string to_csv(const ResultRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%zu,%llu,%.3f", r.experiment.c_str(),
                r.config_hash.c_str(), r.split.c_str(), r.mode.c_str(), r.epoch, r.m.oa, r.m.iou, r.m.f1, r.m.prec,
                r.m.rec, r.params, static_cast<unsigned long long>(r.macs), r.wall_s);
  return buf;
}

inline ResultRow parse_csv_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (f.size() != 13) throw FormatError("result row has " + std::to_string(f.size()) + " fields: " + line);
  try {
    ResultRow r{f[0], f[1], f[2], f[3], std::stoul(f[4]), {}, std::stoul(f[10]), std::stoull(f[11]), std::stod(f[12])};
    r.m = {std::stod(f[5]), std::stod(f[6]), std::stod(f[7]), std::stod(f[8]), std::stod(f[9])};
    return r;
  } catch (const std::logic_error&) {
    throw FormatError("malformed result row: " + line);
  }
}

inline std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open results " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != csv_header()) throw FormatError(path.string() + ": unexpected CSV header");
  std::vector<ResultRow> rows;
  while (std::getline(f, line))
    if (!line.empty()) rows.push_back(parse_csv_row(line));
  return rows;
}

// Serializes appends from concurrent workers; one whole line per write.
class ResultWriter {
 public:
  explicit ResultWriter(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    if (!std::filesystem::exists(path_) || std::filesystem::file_size(path_) == 0) {
      std::ofstream(path_, std::ios::trunc) << csv_header() << "\n";
    }
  }

  void append(const ResultRow& row) {
    std::lock_guard lock(mu_);
    std::ofstream f(path_, std::ios::app);
    if (!f) throw FormatError("cannot append to " + path_.string());
    f << to_csv(row) << "\n";
  }

  void append(const std::vector<ResultRow>& rows) {
    for (const auto& r : rows) append(r);
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

struct Aggregate {
  struct Cell {
    std::size_t n = 0;
    double mean_iou = 0.0;
    double mean_f1 = 0.0;
  };
  std::map<std::string, Cell> cells;  // "experiment|split|mode"
  std::vector<ResultRow> rejected;
};

// Averages rows per (experiment, split, mode). Rows whose hash differs from
// the one registered for their experiment (or whose experiment is not
// registered at all) are set aside.
inline Aggregate aggregate(const std::vector<ResultRow>& rows, const std::map<std::string, std::string>& expected) {
  Aggregate out;
  for (const auto& r : rows) {
    auto it = expected.find(r.experiment);
    if (it == expected.end() || it->second != r.config_hash) {
      out.rejected.push_back(r);
      continue;
    }
    auto& c = out.cells[r.experiment + "|" + r.split + "|" + r.mode];
    c.mean_iou += r.m.iou;
    c.mean_f1 += r.m.f1;
    ++c.n;
  }
  for (auto& [k, c] : out.cells) {
    c.mean_iou /= static_cast<double>(c.n);
    c.mean_f1 /= static_cast<double>(c.n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training and evaluation

inline ConfusionCounts evaluate(const model::Model& m, const std::vector<data::BitemporalSample>& samples,
                                model::InferenceMode mode) {
  NoGradGuard no_grad;
  ConfusionCounts total;
  for (const auto& s : samples) {
    const auto out = model::predict(m, s.image_a, s.image_b, mode);
    const auto pred = model::infer(out, mode);
    const auto gt = s.mask_bits();
    total += confusion(pred, gt);
  }
  return total;
}

inline std::vector<model::InferenceMode> applicable_modes(const model::ArchConfig& a) {
  if (a.head == model::Head::seed) {
    return {model::InferenceMode::siamese, model::InferenceMode::branch_a, model::InferenceMode::branch_b};
  }
  return {model::InferenceMode::siamese};
}

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per-sample loss
  double val_iou = 0.0;
  double wall_s = 0.0;
};

struct TrainOutcome {
  ExperimentConfig config;
  std::string hash;
  model::Model best;        // parameters at the best validation epoch
  AdamW optimizer;          // state after the final epoch
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_iou = -1.0;
  double wall_s = 0.0;
  std::map<model::InferenceMode, MetricsReport> test;  // best model, every applicable mode
  std::vector<ResultRow> rows;                          // per-epoch val rows + test rows

  const MetricsReport& test_metrics(model::InferenceMode m = model::InferenceMode::siamese) const {
    auto it = test.find(m);
    if (it == test.end()) throw UsageError("no test metrics for mode " + model::to_string(m));
    return it->second;
  }
};

inline double grad_norm(const ParamSet& ps, std::string* worst = nullptr) {
  double total = 0.0, worst_norm = -1.0;
  for (const auto& [name, t] : ps) {
    if (!t.has_grad()) continue;
    double s = 0.0;
    for (double g : t.grad()) s += g * g;
    total += s;
    if (worst && s > worst_norm) {
      worst_norm = s;
      *worst = name;
    }
  }
  return std::sqrt(total);
}

inline data::Dataset prepare_dataset(const ExperimentConfig& cfg) {
  auto d = data::generate_dataset(cfg.data);
  return cfg.shift_px ? data::shift_dataset(d, cfg.shift_px) : d;
}

// Minibatch AdamW on the mean per-sample loss; validation IoU after every
// epoch; the best-validation parameters are kept. `dataset` must already carry
// the config's shift.
inline TrainOutcome train(const ExperimentConfig& cfg, const data::Dataset& dataset, const Log& log = {}) {
  cfg.validate();
  const auto t0 = Clock::now();
  TrainOutcome out{cfg, config_hash(cfg), model::make_model(cfg.arch, cfg.seed), AdamW(cfg.optim), {}, 0, -1.0, 0.0, {}, {}};
  model::Model m = model::make_model(cfg.arch, cfg.seed);
  data::SampleRng rng(splitmix64(cfg.seed ^ 0x7a11ULL));
  const auto& train_set = dataset.train;
  if (train_set.empty()) throw ConfigError("train: empty training split");
  std::vector<std::size_t> order(train_set.size());
  std::uint64_t iteration = 0;
  const std::size_t params = model::param_count(cfg.arch);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto te = Clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch, ++iteration) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch);
      const double scale = 1.0 / static_cast<double>(b1 - b0);
      m.params.zero_grad();
      for (std::size_t k = b0; k < b1; ++k) {
        const auto s = cfg.augment ? data::augment(train_set[order[k]], rng) : train_set[order[k]];
        const auto fwd = model::forward(m, s.image_a, s.image_b, iteration, Phase::train);
        const auto loss = model::loss(fwd, s.mask);
        const double v = loss.item();
        if (!std::isfinite(v)) {
          std::string worst;
          const double gn = grad_norm(m.params, &worst);
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", iteration " +
                              std::to_string(iteration) + " (lr " + detail::fmt_double(cfg.optim.lr) +
                              ", grad norm " + detail::fmt_double(gn) + ", largest in '" + worst + "')");
        }
        loss_sum += v;
        backward(loss * scale);
      }
      out.optimizer.step(m.params);
    }
    const auto val = metrics(evaluate(m, dataset.val, model::InferenceMode::siamese));
    EpochLog e{epoch + 1, loss_sum / static_cast<double>(order.size()), val.iou, seconds_since(te)};
    out.log.push_back(e);
    out.rows.push_back({cfg.id, out.hash, "val", "siamese", e.epoch, val, params,
                        model::account(cfg.arch).forward_macs, seconds_since(t0)});
    if (val.iou > out.best_val_iou) {
      out.best_val_iou = val.iou;
      out.best_epoch = e.epoch;
      out.best.params.copy_values_from(m.params);
    }
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "[%s] epoch %zu/%zu loss %.4f val IoU %.4f (%.1fs)", cfg.id.c_str(), e.epoch,
                    cfg.epochs, e.train_loss, e.val_iou, e.wall_s);
      log(buf);
    }
  }
  out.wall_s = seconds_since(t0);
  for (auto mode : applicable_modes(cfg.arch)) {
    const auto r = metrics(evaluate(out.best, dataset.test, mode));
    out.test[mode] = r;
    out.rows.push_back({cfg.id, out.hash, "test", model::to_string(mode), out.best_epoch, r, params,
                        model::account(cfg.arch, mode).forward_macs, out.wall_s});
  }
  return out;
}

// Memoizes trainings by config hash (the experiment id is a label and is not
// part of the hash), so suites that share a cell train it once.
class Runner {
 public:
  explicit Runner(std::size_t threads = 1, Log log = {}) : threads_(std::max<std::size_t>(1, threads)), log_(std::move(log)) {}

  std::shared_ptr<const TrainOutcome> run(const ExperimentConfig& cfg) {
    const auto key = config_hash(cfg);
    std::shared_future<std::shared_ptr<const TrainOutcome>> fut;
    std::promise<std::shared_ptr<const TrainOutcome>> promise;
    bool owner = false;
    {
      std::lock_guard lock(mu_);
      auto it = runs_.find(key);
      if (it == runs_.end()) {
        fut = promise.get_future().share();
        runs_.emplace(key, fut);
        owner = true;
      } else {
        fut = it->second;
      }
    }
    if (owner) {
      try {
        const auto ds = dataset(cfg);
        auto result = std::make_shared<TrainOutcome>(train(cfg, *ds, log_));
        promise.set_value(std::move(result));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    auto result = fut.get();
    if (result->config.id == cfg.id) return result;
    // Same training under another label: relabel the rows.
    auto copy = std::make_shared<TrainOutcome>(*result);
    copy->config.id = cfg.id;
    for (auto& r : copy->rows) r.experiment = cfg.id;
    return copy;
  }

  // Runs every config, up to `threads` at a time; results keep input order.
  std::vector<std::shared_ptr<const TrainOutcome>> run_all(const std::vector<ExperimentConfig>& cfgs) {
    std::vector<std::shared_ptr<const TrainOutcome>> out(cfgs.size());
    std::vector<std::exception_ptr> errors(cfgs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < cfgs.size(); i = next++) {
        try {
          out[i] = run(cfgs[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const std::size_t n = std::min(threads_, cfgs.size());
    if (n <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    return out;
  }

  std::shared_ptr<const data::Dataset> dataset(const ExperimentConfig& cfg) {
    ExperimentConfig key_cfg;
    key_cfg.data = cfg.data;
    key_cfg.shift_px = cfg.shift_px;
    const auto key = config_hash(key_cfg);
    std::shared_future<std::shared_ptr<const data::Dataset>> fut;
    std::promise<std::shared_ptr<const data::Dataset>> promise;
    bool owner = false;
    {
      std::lock_guard lock(mu_);
      auto it = datasets_.find(key);
      if (it == datasets_.end()) {
        fut = promise.get_future().share();
        datasets_.emplace(key, fut);
        owner = true;
      } else {
        fut = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(std::make_shared<const data::Dataset>(prepare_dataset(cfg)));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return fut.get();
  }

  std::size_t threads() const { return threads_; }

 private:
  std::size_t threads_;
  Log log_;
  std::mutex mu_;
  std::map<std::string, std::shared_future<std::shared_ptr<const TrainOutcome>>> runs_;
  std::map<std::string, std::shared_future<std::shared_ptr<const data::Dataset>>> datasets_;
};

// ---------------------------------------------------------------------------
// Suites

struct SuiteResult {
  std::vector<ResultRow> rows;
  nlohmann::json summary;
  std::string table;  // human-readable
  bool passed = true;
};

inline std::string seed_tag(std::uint64_t s) { return "s" + std::to_string(s); }

inline ResultRow test_row(const TrainOutcome& o, model::InferenceMode mode = model::InferenceMode::siamese) {
  for (const auto& r : o.rows)
    if (r.split == "test" && r.mode == model::to_string(mode)) return r;
  throw UsageError("outcome has no test row for " + model::to_string(mode));
}

inline double mean(const std::vector<double>& xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

struct Variant {
  std::string name;
  model::Head head;
  ExchangeAxis axis = ExchangeAxis::layer;
  ExchangePolicy policy = ExchangePolicy::deterministic;
};

inline ExperimentConfig variant_config(const ExperimentConfig& base, const Variant& v, std::uint64_t seed,
                                       const std::string& suite) {
  ExperimentConfig c = base;
  c.id = suite + "/" + v.name + "/" + seed_tag(seed);
  c.seed = seed;
  c.arch.head = v.head;
  if (v.head == model::Head::seed) {
    c.arch.exchange.axis = v.axis;
    c.arch.exchange.policy = v.policy;
    c.arch.exchange.seed = seed;
  } else {
    c.arch.exchange = ExchangeSpec{};
  }
  return c;
}

inline const std::vector<Variant>& ablation_variants() {
  static const std::vector<Variant> v{
      {"LE", model::Head::seed, ExchangeAxis::layer},
      {"CE", model::Head::seed, ExchangeAxis::channel},
      {"SE", model::Head::seed, ExchangeAxis::spatial_col},
      {"concat", model::Head::concat},
      {"add", model::Head::add},
      {"subtract", model::Head::subtract},
  };
  return v;
}

inline SuiteResult suite_exchange_vs_fusion(const ExperimentConfig& base, Runner& runner) {
  std::vector<ExperimentConfig> cfgs;
  for (auto s : base.seeds)
    for (const auto& v : ablation_variants()) cfgs.push_back(variant_config(base, v, s, "ablation"));
  const auto outcomes = runner.run_all(cfgs);

  SuiteResult res;
  std::map<std::string, std::vector<double>> iou;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    const auto row = test_row(*outcomes[i]);
    res.rows.push_back(row);
    iou[ablation_variants()[i % ablation_variants().size()].name].push_back(row.m.iou);
  }
  std::string best_ex, best_fu;
  double ex = -1.0, fu = -1.0;
  std::ostringstream table;
  table << "variant   kind      mean_iou  std      per-seed\n";
  for (const auto& v : ablation_variants()) {
    const double mu = mean(iou[v.name]);
    const bool is_ex = v.head == model::Head::seed;
    if (is_ex && mu > ex) ex = mu, best_ex = v.name;
    if (!is_ex && mu > fu) fu = mu, best_fu = v.name;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-9s %-9s %.4f    %.4f  ", v.name.c_str(), is_ex ? "exchange" : "fusion", mu,
                  stddev(iou[v.name]));
    table << buf;
    for (double x : iou[v.name]) table << detail::fmt_double(std::round(x * 1e4) / 1e4) << " ";
    table << "\n";
    res.summary["variants"][v.name] = {{"kind", is_ex ? "exchange" : "fusion"},
                                       {"mean_iou", mu},
                                       {"std_iou", stddev(iou[v.name])},
                                       {"iou", iou[v.name]}};
  }
  res.summary["best_exchange"] = {{"variant", best_ex}, {"mean_iou", ex}};
  res.summary["best_fusion"] = {{"variant", best_fu}, {"mean_iou", fu}};
  res.summary["margin"] = ex - fu;
  res.passed = ex >= fu - 0.02;
  res.summary["pass"] = res.passed;
  table << "best exchange " << best_ex << " " << ex << " vs best fusion " << best_fu << " " << fu
        << " (margin " << ex - fu << ", tolerance -0.02)\n";
  res.table = table.str();
  return res;
}

inline SuiteResult suite_random_exchange(const ExperimentConfig& base, Runner& runner) {
  const std::vector<std::pair<std::string, ExchangeAxis>> axes{
      {"LE", ExchangeAxis::layer}, {"CE", ExchangeAxis::channel}, {"SE", ExchangeAxis::spatial_col}};
  std::vector<ExperimentConfig> random_cfgs, det_cfgs;
  for (const auto& [name, axis] : axes)
    for (auto s : base.seeds) {
      random_cfgs.push_back(
          variant_config(base, {"R" + name, model::Head::seed, axis, ExchangePolicy::bernoulli}, s, "random"));
      det_cfgs.push_back(variant_config(base, {name, model::Head::seed, axis}, s, "ablation"));
    }
  auto all = random_cfgs;
  all.insert(all.end(), det_cfgs.begin(), det_cfgs.end());
  const auto outcomes = runner.run_all(all);

  SuiteResult res;
  std::ostringstream table;
  table << "axis  random_mean  deterministic_mean  diff\n";
  const std::size_t n_seeds = base.seeds.size();
  for (std::size_t a = 0; a < axes.size(); ++a) {
    std::vector<double> r_iou, d_iou;
    for (std::size_t k = 0; k < n_seeds; ++k) {
      const auto row = test_row(*outcomes[a * n_seeds + k]);
      res.rows.push_back(row);
      r_iou.push_back(row.m.iou);
      d_iou.push_back(test_row(*outcomes[random_cfgs.size() + a * n_seeds + k]).m.iou);
    }
    const double diff = mean(r_iou) - mean(d_iou);
    const bool ok = std::abs(diff) <= 0.02;
    res.passed = res.passed && ok;
    res.summary["axes"][axes[a].first] = {{"random_mean_iou", mean(r_iou)},
                                          {"deterministic_mean_iou", mean(d_iou)},
                                          {"random_iou", r_iou},
                                          {"deterministic_iou", d_iou},
                                          {"diff", diff},
                                          {"pass", ok}};
    char buf[160];
    std::snprintf(buf, sizeof buf, "R%-4s %.4f       %.4f              %+.4f %s\n", axes[a].first.c_str(),
                  mean(r_iou), mean(d_iou), diff, ok ? "ok" : "outside 0.02");
    table << buf;
  }
  res.summary["pass"] = res.passed;
  res.table = table.str();
  return res;
}

// Evaluates one SEED model in both single-branch modes and siamese mode.
inline SuiteResult suite_single_decoder(const model::Model& m, const std::vector<data::BitemporalSample>& test,
                                        const std::string& experiment, const std::string& hash,
                                        std::size_t epoch = 0) {
  if (m.config.head != model::Head::seed) {
    throw UsageError("single-decoder suite needs a SEED checkpoint, got head '" + model::to_string(m.config.head) +
                     "'");
  }
  SuiteResult res;
  std::map<model::InferenceMode, ResultRow> rows;
  for (auto mode : {model::InferenceMode::branch_a, model::InferenceMode::branch_b, model::InferenceMode::siamese}) {
    const auto t0 = Clock::now();
    const auto r = metrics(evaluate(m, test, mode));
    rows[mode] = {experiment, hash, "test", model::to_string(mode), epoch, r, model::param_count(m.config),
                  model::account(m.config, mode).forward_macs, seconds_since(t0)};
    res.rows.push_back(rows[mode]);
  }
  const double a = rows[model::InferenceMode::branch_a].m.iou;
  const double b = rows[model::InferenceMode::branch_b].m.iou;
  const double s = rows[model::InferenceMode::siamese].m.iou;
  const double delta = 0.5 * (a + b) - s;
  res.passed = std::abs(delta) <= 0.02;
  const auto macs_single = rows[model::InferenceMode::branch_a].macs;
  const auto macs_dual = rows[model::InferenceMode::siamese].macs;
  res.summary = {{"iou_a", a},
                 {"iou_b", b},
                 {"iou_siamese", s},
                 {"delta", delta},
                 {"siamese_at_least_min_branch", s >= std::min(a, b)},
                 {"macs_single", macs_single},
                 {"macs_dual", macs_dual},
                 {"pass", res.passed}};
  char buf[300];
  std::snprintf(buf, sizeof buf,
                "mode      iou     macs\nbranch_a  %.4f  %llu\nbranch_b  %.4f  %llu\nsiamese   %.4f  %llu\n"
                "delta = mean(A,B) - siamese = %+.4f\n",
                a, static_cast<unsigned long long>(macs_single), b, static_cast<unsigned long long>(macs_single), s,
                static_cast<unsigned long long>(macs_dual), delta);
  res.table = buf;
  return res;
}

inline SuiteResult suite_single_decoder(const TrainOutcome& o, const std::vector<data::BitemporalSample>& test) {
  return suite_single_decoder(o.best, test, o.config.id, o.hash, o.best_epoch);
}

inline SuiteResult suite_shift_robustness(const ExperimentConfig& base, Runner& runner) {
  std::vector<ExperimentConfig> cfgs;
  for (auto n : base.shift_grid) {
    ExperimentConfig c = base;
    c.shift_px = n;
    c.id = "shift/N" + std::to_string(n);
    cfgs.push_back(c);
  }
  const auto outcomes = runner.run_all(cfgs);
  SuiteResult res;
  double iou0 = -1.0;
  for (std::size_t i = 0; i < cfgs.size(); ++i)
    if (cfgs[i].shift_px == 0) iou0 = test_row(*outcomes[i]).m.iou;
  std::ostringstream table;
  table << "N   iou     retention\n";
  std::vector<double> retention;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    const auto row = test_row(*outcomes[i]);
    res.rows.push_back(row);
    const double ret = iou0 > 0.0 ? row.m.iou / iou0 : std::nan("");
    retention.push_back(ret);
    const auto n = cfgs[i].shift_px;
    res.summary["cells"].push_back({{"N", n}, {"iou", row.m.iou}, {"retention", iou0 > 0.0 ? nlohmann::json(ret) : nlohmann::json()}});
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-3zu %.4f  %.1f%%\n", n, row.m.iou, 100.0 * ret);
    table << buf;
  }
  // Trend over the grid in ascending N: count adjacent rises.
  std::vector<std::size_t> idx(cfgs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return cfgs[x].shift_px < cfgs[y].shift_px; });
  std::size_t rises = 0;
  for (std::size_t k = 1; k < idx.size(); ++k)
    if (retention[idx[k]] > retention[idx[k - 1]]) ++rises;
  const bool monotone = rises == 0;
  res.summary["monotone_non_increasing"] = monotone;
  res.summary["rises"] = rises;
  table << "trend: " << (monotone ? "monotone non-increasing" : std::to_string(rises) + " rise(s) along N") << "\n";
  for (std::size_t i = 0; i < cfgs.size(); ++i)
    if (cfgs[i].shift_px == 2) {
      res.passed = retention[i] >= 0.9;
      res.summary["retention_n2"] = retention[i];
    }
  res.summary["pass"] = res.passed;
  res.table = table.str();
  return res;
}

}  // namespace seed::harness
