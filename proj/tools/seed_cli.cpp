#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "seed/checkpoint.hpp"
#include "seed/config.hpp"
#include "seed/harness.hpp"
#include "seed/metrics.hpp"
#include "seed/verify.hpp"

namespace fs = std::filesystem;
using namespace seed;

namespace {

enum ExitCode { kOk = 0, kInvariantFailure = 1, kUsage = 2 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 1;
};

ExperimentConfig load(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.arch.exchange.seed = *g.seed;
  }
  cfg.validate();
  return cfg;
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw UsageError("--out DIR is required for this subcommand");
  fs::create_directories(g.out);
  return g.out;
}

void log_line(const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); }

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw FormatError("cannot write " + p.string());
  f << text;
}

data::Dataset dataset_for(const ExperimentConfig& cfg, const std::string& data_dir) {
  if (data_dir.empty()) return harness::prepare_dataset(cfg);
  auto d = data::load_dataset(data_dir);
  return cfg.shift_px ? data::shift_dataset(d, cfg.shift_px) : d;
}

void emit_suite(const harness::SuiteResult& r, const Globals& g, const ExperimentConfig& cfg) {
  std::cout << r.table;
  if (g.out.empty()) return;
  const auto out = require_out(g);
  harness::ResultWriter(out / "results.csv").append(r.rows);
  write_text(out / "summary.json", r.summary.dump(2) + "\n");
  write_text(out / "table.txt", r.table);
  save_config(out / "config.ini", cfg);
}

int cmd_gen_data(const Globals& g) {
  auto cfg = load(g);
  if (g.seed) cfg.data.seed = *g.seed;
  const auto out = require_out(g);
  data::save_dataset(out, data::generate_dataset(cfg.data));
  std::printf("wrote %zu/%zu/%zu samples to %s\n", cfg.data.n_train, cfg.data.n_val, cfg.data.n_test,
              out.string().c_str());
  return kOk;
}

int cmd_train(const Globals& g, const std::string& data_dir) {
  const auto cfg = load(g);
  const auto ds = dataset_for(cfg, data_dir);
  const auto o = harness::train(cfg, ds, log_line);
  for (const auto& [mode, m] : o.test)
    std::printf("test %-9s IoU %.4f F1 %.4f OA %.4f (best epoch %zu)\n", model::to_string(mode).c_str(), m.iou, m.f1,
                m.oa, o.best_epoch);
  if (!g.out.empty()) {
    const auto out = require_out(g);
    save_checkpoint(out / "checkpoint", o.best, &o.optimizer,
                    {{"config_hash", o.hash}, {"experiment", cfg.id}, {"best_epoch", o.best_epoch},
                     {"best_val_iou", o.best_val_iou}});
    harness::ResultWriter(out / "results.csv").append(o.rows);
    save_config(out / "config.ini", cfg);
  }
  return kOk;
}

int cmd_eval(const Globals& g, const std::string& checkpoint, const std::string& data_dir) {
  const auto cfg = load(g);
  const auto ck = load_checkpoint(checkpoint);
  const auto ds = dataset_for(cfg, data_dir);
  const auto hash = ck.extra.value("config_hash", config_hash(cfg));
  std::vector<harness::ResultRow> rows;
  for (auto mode : cfg.modes) {
    if (mode != model::InferenceMode::siamese && ck.model.config.head != model::Head::seed) {
      throw UsageError("mode " + model::to_string(mode) + " needs a SEED checkpoint");
    }
    const auto t0 = harness::Clock::now();
    const auto m = metrics(harness::evaluate(ck.model, ds.test, mode));
    rows.push_back({cfg.id, hash, "test", model::to_string(mode), ck.extra.value("best_epoch", std::size_t{0}), m,
                    model::param_count(ck.model.config), model::account(ck.model.config, mode).forward_macs,
                    harness::seconds_since(t0)});
  }
  std::cout << harness::csv_header() << "\n";
  for (const auto& r : rows) std::cout << harness::to_csv(r) << "\n";
  if (!g.out.empty()) harness::ResultWriter(require_out(g) / "results.csv").append(rows);
  return kOk;
}

int cmd_verify(const Globals& g) {
  verify::Options opts;
  if (g.seed) opts.seed = *g.seed;
  const auto checks = verify::run_all(opts);
  const auto rep = verify::report(checks);
  std::cout << rep.dump(2) << "\n";
  if (!g.out.empty()) write_text(require_out(g) / "verify.json", rep.dump(2) + "\n");
  return verify::all_pass(checks) ? kOk : kInvariantFailure;
}

int cmd_account(const Globals& g) {
  const auto cfg = load(g);
  nlohmann::json j;
  auto emit = [&](const char* label, model::InferenceMode mode) {
    const auto a = model::account(cfg.arch, mode);
    j[label] = {{"params", a.param_count},       {"encoder_macs", a.encoder_macs}, {"exchange_macs", a.exchange_macs},
                {"fusion_macs", a.fusion_macs},   {"neck_macs", a.neck_macs},       {"decoder_macs", a.decoder_macs},
                {"forward_macs", a.forward_macs}};
    std::printf("%-15s params %zu  forward MACs %llu  (encoder %llu, exchange %llu, fusion %llu, neck %llu, "
                "decoder %llu)\n",
                label, a.param_count, static_cast<unsigned long long>(a.forward_macs),
                static_cast<unsigned long long>(a.encoder_macs), static_cast<unsigned long long>(a.exchange_macs),
                static_cast<unsigned long long>(a.fusion_macs), static_cast<unsigned long long>(a.neck_macs),
                static_cast<unsigned long long>(a.decoder_macs));
  };
  emit(cfg.arch.head == model::Head::seed ? "dual_decoder" : "single_decoder", model::InferenceMode::siamese);
  if (cfg.arch.head == model::Head::seed) emit("single_decoder", model::InferenceMode::branch_a);
  if (!g.out.empty()) write_text(require_out(g) / "account.json", j.dump(2) + "\n");
  return kOk;
}

int cmd_seg2cd(const Globals& g) {
  auto cfg = load(g);
  auto seg = cfg.arch;
  seg.head = model::Head::segmentation;
  const auto cd = model::seg2cd(seg, cfg.arch.exchange);
  const auto ps = model::param_count(seg), pc = model::param_count(cd);
  std::printf("segmentation params %zu\nconverted SEED(LE) params %zu (%s)\n", ps, pc,
              ps == pc ? "identical" : "DIFFERENT");
  cfg.arch = cd;
  cfg.id = cfg.id + "_seg2cd";
  std::cout << "\n" << to_ini(cfg);
  if (!g.out.empty()) save_config(require_out(g) / "seg2cd.ini", cfg);
  return ps == pc ? kOk : kInvariantFailure;
}

int cmd_render(const Globals& g, const std::string& checkpoint, const std::string& data_dir, std::size_t count,
               const std::string& mode_name) {
  const auto cfg = load(g);
  const auto ck = load_checkpoint(checkpoint);
  const auto ds = dataset_for(cfg, data_dir);
  const auto out = require_out(g);
  const auto mode = model::parse_mode(mode_name);
  NoGradGuard no_grad;
  ConfusionCounts total;
  for (std::size_t i = 0; i < std::min(count, ds.test.size()); ++i) {
    const auto& s = ds.test[i];
    const auto pred = model::infer(model::predict(ck.model, s.image_a, s.image_b, mode), mode);
    const auto gt = s.mask_bits();
    write_ppm(out / (data::sample_stem(i) + "_errors.ppm"), error_map(pred, gt, cfg.data.height, cfg.data.width));
    total += confusion(pred, gt);
  }
  std::printf("rendered %zu maps: tp %llu tn %llu fp %llu fn %llu\n", std::min(count, ds.test.size()),
              static_cast<unsigned long long>(total.tp), static_cast<unsigned long long>(total.tn),
              static_cast<unsigned long long>(total.fp), static_cast<unsigned long long>(total.fn));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Siamese encoder-exchange-decoder change detection toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "experiment config file (INI)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "seed override");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "parallel suite workers")->check(CLI::PositiveNumber);

  auto sub = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    s->fallthrough();
    return s;
  };
  std::string data_dir, checkpoint, mode = "siamese";
  std::size_t count = 16;

  auto* gen = sub("gen-data", "generate and save the synthetic dataset");
  auto* tr = sub("train", "train one configuration");
  tr->add_option("--data", data_dir, "load the dataset from this directory instead of generating it");
  auto* ev = sub("eval", "evaluate a checkpoint on the test split");
  ev->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  ev->add_option("--data", data_dir, "dataset directory");
  auto* ver = sub("verify", "run exchange and information-theory invariant audits");
  auto* abl = sub("suite-ablation", "exchange vs fusion comparison over seeds");
  auto* rnd = sub("suite-random", "random-exchange training vs deterministic");
  auto* sdec = sub("suite-single-decoder", "branch vs siamese inference on a SEED checkpoint");
  sdec->add_option("--checkpoint", checkpoint, "checkpoint directory (trains the config if omitted)");
  sdec->add_option("--data", data_dir, "dataset directory");
  auto* shf = sub("suite-shift", "misregistration sweep with retention table");
  auto* acc = sub("account", "static parameter and MAC counts");
  auto* s2c = sub("seg2cd", "convert a segmentation architecture into SEED(LE)");
  auto* ren = sub("render-errors", "write color-coded error maps (PPM)");
  ren->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  ren->add_option("--data", data_dir, "dataset directory");
  ren->add_option("--count", count, "number of test samples");
  ren->add_option("--mode", mode, "siamese | branch_a | branch_b");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsage;
  }

  try {
    harness::Runner runner(g.threads, log_line);
    if (gen->parsed()) return cmd_gen_data(g);
    if (tr->parsed()) return cmd_train(g, data_dir);
    if (ev->parsed()) return cmd_eval(g, checkpoint, data_dir);
    if (ver->parsed()) return cmd_verify(g);
    if (acc->parsed()) return cmd_account(g);
    if (s2c->parsed()) return cmd_seg2cd(g);
    if (ren->parsed()) return cmd_render(g, checkpoint, data_dir, count, mode);
    const auto cfg = load(g);
    if (abl->parsed()) emit_suite(harness::suite_exchange_vs_fusion(cfg, runner), g, cfg);
    if (rnd->parsed()) emit_suite(harness::suite_random_exchange(cfg, runner), g, cfg);
    if (shf->parsed()) emit_suite(harness::suite_shift_robustness(cfg, runner), g, cfg);
    if (sdec->parsed()) {
      if (checkpoint.empty()) {
        const auto o = runner.run(cfg);
        emit_suite(harness::suite_single_decoder(*o, runner.dataset(cfg)->test), g, cfg);
      } else {
        const auto ck = load_checkpoint(checkpoint);
        const auto ds = dataset_for(cfg, data_dir);
        emit_suite(harness::suite_single_decoder(ck.model, ds.test, cfg.id,
                                                 ck.extra.value("config_hash", config_hash(cfg)),
                                                 ck.extra.value("best_epoch", std::size_t{0})),
                   g, cfg);
      }
    }
    return kOk;
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kInvariantFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}
