#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>
#include <thread>

#include "seed/harness.hpp"

using namespace seed;
using namespace seed::harness;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.id = "tiny";
  c.epochs = 2;
  c.batch = 4;
  c.data.n_train = 12;
  c.data.n_val = 6;
  c.data.n_test = 6;
  c.data.height = c.data.width = 16;
  c.arch.height = c.arch.width = 16;
  c.arch.channels = {4, 8, 8};
  c.arch.neck_channels = 8;
  c.shift_grid = {0, 2, 4, 6, 8};
  return c;
}

ResultRow sample_row(const std::string& exp = "e", const std::string& hash = "h", double iou = 0.5) {
  ResultRow r{exp, hash, "test", "siamese", 3, {}, 1234, 567890, 1.25};
  r.m = {0.9, iou, 0.66, 0.7, 0.625};
  return r;
}

std::vector<ResultRow> strip_wall(std::vector<ResultRow> rows) {
  for (auto& r : rows) r.wall_s = 0.0;
  return rows;
}

bool same_rows(const std::vector<ResultRow>& a, const std::vector<ResultRow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (to_csv(a[i]) != to_csv(b[i])) return false;
  return true;
}

}  // namespace

TEST(Results, CsvHeaderAndRoundTrip) {
  EXPECT_EQ(csv_header(), "experiment,config_hash,split,mode,epoch,oa,iou,f1,prec,rec,params,macs,wall_s");
  const auto r = sample_row();
  EXPECT_EQ(to_csv(r), "e,h,test,siamese,3,0.900000,0.500000,0.660000,0.700000,0.625000,1234,567890,1.250");
  const auto back = parse_csv_row(to_csv(r));
  EXPECT_EQ(to_csv(back), to_csv(r));
  EXPECT_THROW(parse_csv_row("a,b,c"), FormatError);
  EXPECT_THROW(parse_csv_row("e,h,test,siamese,x,0,0,0,0,0,1,1,1"), FormatError);
}

TEST(Results, ConcurrentAppendsStayWhole) {
  const auto p = fs::temp_directory_path() / "seed_results_concurrent.csv";
  fs::remove(p);
  ResultWriter w(p);
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t)
    pool.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i) w.append(sample_row("worker" + std::to_string(t), "h", i / 100.0));
    });
  for (auto& th : pool) th.join();
  const auto rows = read_results(p);
  EXPECT_EQ(rows.size(), 200u);
  ResultWriter again(p);  // existing file keeps its single header
  again.append(sample_row());
  EXPECT_EQ(read_results(p).size(), 201u);
}

TEST(Results, BadHeaderRejected) {
  const auto p = fs::temp_directory_path() / "seed_results_bad.csv";
  std::ofstream(p, std::ios::trunc) << "experiment,iou\n";
  EXPECT_THROW(read_results(p), FormatError);
}

TEST(Results, AggregateRejectsMismatchedHashes) {
  const std::vector<ResultRow> rows{sample_row("a", "h1", 0.4), sample_row("a", "h1", 0.6), sample_row("a", "stale", 0.9),
                                    sample_row("b", "h2", 0.3), sample_row("unknown", "h3", 0.1)};
  const auto agg = aggregate(rows, {{"a", "h1"}, {"b", "h2"}});
  ASSERT_EQ(agg.cells.size(), 2u);
  EXPECT_EQ(agg.cells.at("a|test|siamese").n, 2u);
  EXPECT_NEAR(agg.cells.at("a|test|siamese").mean_iou, 0.5, 1e-12);
  EXPECT_EQ(agg.rejected.size(), 2u);
}

TEST(Train, DeterministicAndBestValKept) {
  const auto cfg = tiny();
  const auto ds = prepare_dataset(cfg);
  const auto a = train(cfg, ds);
  const auto b = train(cfg, ds);
  EXPECT_TRUE(same_rows(strip_wall(a.rows), strip_wall(b.rows)));
  for (const auto& [name, t] : a.best.params) EXPECT_EQ(t.values(), b.best.params.at(name).values()) << name;

  ASSERT_EQ(a.log.size(), 2u);
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (const auto& e : a.log)
    if (e.val_iou > best) best = e.val_iou, best_epoch = e.epoch;
  EXPECT_EQ(a.best_val_iou, best);
  EXPECT_EQ(a.best_epoch, best_epoch);
  // Re-evaluating the kept parameters reproduces the recorded best val IoU.
  EXPECT_EQ(metrics(evaluate(a.best, ds.val, model::InferenceMode::siamese)).iou, best);
}

TEST(Train, RowsCarryAccounting) {
  const auto cfg = tiny();
  const auto o = train(cfg, prepare_dataset(cfg));
  std::size_t val = 0, test = 0;
  for (const auto& r : o.rows) {
    EXPECT_EQ(r.config_hash, config_hash(cfg));
    EXPECT_EQ(r.params, model::account(cfg.arch).param_count);
    const auto mode = model::parse_mode(r.mode);
    EXPECT_EQ(r.macs, model::account(cfg.arch, mode).forward_macs);
    (r.split == "val" ? val : test) += 1;
  }
  EXPECT_EQ(val, 2u);
  EXPECT_EQ(test, 3u);  // siamese, branch_a, branch_b
  EXPECT_LT(test_row(o, model::InferenceMode::branch_a).macs, test_row(o).macs);
}

TEST(Train, NonFiniteLossAborts) {
  const auto cfg = tiny();
  auto ds = prepare_dataset(cfg);
  for (auto& s : ds.train) s.image_a.mutable_data()[5] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(cfg, ds);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("lr"), std::string::npos) << msg;
    EXPECT_NE(msg.find("grad norm"), std::string::npos) << msg;
  }
}

TEST(Train, RandomMasksAreDeterministicAtEval) {
  auto cfg = tiny();
  cfg.arch.exchange.policy = ExchangePolicy::bernoulli;
  cfg.arch.exchange.axis = ExchangeAxis::channel;
  const auto ds = prepare_dataset(cfg);
  const auto o = train(cfg, ds);
  const auto c1 = evaluate(o.best, ds.test, model::InferenceMode::siamese);
  const auto c2 = evaluate(o.best, ds.test, model::InferenceMode::siamese);
  EXPECT_EQ(c1, c2);
}

TEST(Runner, MemoizesByHash) {
  std::atomic<int> epochs{0};
  Runner runner(1, [&](const std::string&) { ++epochs; });
  auto a = tiny();
  auto b = tiny();
  b.id = "relabelled";
  const auto ra = runner.run(a);
  const auto rb = runner.run(b);
  EXPECT_EQ(epochs.load(), 2);
  EXPECT_EQ(rb->config.id, "relabelled");
  for (const auto& r : rb->rows) EXPECT_EQ(r.experiment, "relabelled");
  EXPECT_EQ(ra->test_metrics().iou, rb->test_metrics().iou);
  EXPECT_EQ(runner.dataset(a).get(), runner.dataset(b).get());
}

TEST(Runner, ParallelMatchesSerial) {
  std::vector<ExperimentConfig> cfgs;
  for (std::uint64_t s : {1u, 2u, 3u}) {
    auto c = tiny();
    c.seed = s;
    c.id = "p" + std::to_string(s);
    cfgs.push_back(c);
  }
  Runner serial(1), parallel(3);
  const auto x = serial.run_all(cfgs);
  const auto y = parallel.run_all(cfgs);
  for (std::size_t i = 0; i < cfgs.size(); ++i)
    EXPECT_TRUE(same_rows(strip_wall(x[i]->rows), strip_wall(y[i]->rows)));
}

TEST(Suites, AblationShape) {
  Runner runner(2);
  const auto r = suite_exchange_vs_fusion(tiny(), runner);
  EXPECT_EQ(r.rows.size(), 18u);  // six variants, three seeds
  std::map<std::string, std::size_t> params;
  for (const auto& row : r.rows) params[row.experiment.substr(0, row.experiment.rfind('/'))] = row.params;
  EXPECT_EQ(params["ablation/LE"], params["ablation/add"]);
  EXPECT_EQ(params["ablation/CE"], params["ablation/subtract"]);
  EXPECT_GT(params["ablation/concat"], params["ablation/add"]);
  EXPECT_TRUE(r.summary.contains("best_exchange"));
  EXPECT_EQ(r.passed, r.summary["pass"].get<bool>());
}

TEST(Suites, RandomExchangeShapeAndReuse) {
  std::atomic<int> epochs{0};
  Runner runner(2, [&](const std::string&) { ++epochs; });
  suite_exchange_vs_fusion(tiny(), runner);
  const int after_ablation = epochs.load();
  const auto r = suite_random_exchange(tiny(), runner);
  EXPECT_EQ(r.rows.size(), 9u);
  // Deterministic counterparts come from the ablation cells: only 9 new trainings.
  EXPECT_EQ(epochs.load() - after_ablation, 9 * 2);
  for (const auto& row : r.rows) EXPECT_EQ(row.experiment.rfind("random/R", 0), 0u);
}

TEST(Suites, SingleDecoder) {
  const auto cfg = tiny();
  const auto ds = prepare_dataset(cfg);
  const auto o = train(cfg, ds);
  const auto r = suite_single_decoder(o, ds.test);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_LT(r.rows[0].macs, r.rows[2].macs);
  EXPECT_EQ(r.rows[0].macs, r.rows[1].macs);
  const double delta = 0.5 * (r.rows[0].m.iou + r.rows[1].m.iou) - r.rows[2].m.iou;
  EXPECT_NEAR(r.summary["delta"].get<double>(), delta, 1e-15);

  auto fcfg = tiny();
  fcfg.arch.head = model::Head::subtract;
  EXPECT_THROW(suite_single_decoder(model::make_model(fcfg.arch, 1), ds.test, "x", "h"), UsageError);
}

TEST(Suites, ShiftShape) {
  Runner runner(2);
  const auto r = suite_shift_robustness(tiny(), runner);
  ASSERT_EQ(r.rows.size(), 5u);
  ASSERT_EQ(r.summary["cells"].size(), 5u);
  EXPECT_EQ(r.summary["cells"][0]["N"], 0);
  if (r.rows[0].m.iou > 0.0) {
    EXPECT_DOUBLE_EQ(r.summary["cells"][0]["retention"].get<double>(), 1.0);
  }
  EXPECT_TRUE(r.summary.contains("monotone_non_increasing"));
  // Distinct shifts give distinct datasets, hence distinct hashes.
  std::set<std::string> hashes;
  for (const auto& row : r.rows) hashes.insert(row.config_hash);
  EXPECT_EQ(hashes.size(), 5u);
}
