#pragma once

// Checkpoint directory:
//   manifest.json            arch config, parameter names, optimizer state
//   params/<name>.bt         one tensor per parameter
//   optim/<name>.m.bt, .v.bt Adam moments (absent before the first step)

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "seed/bt_io.hpp"
#include "seed/model.hpp"
#include "seed/optim.hpp"

namespace seed {

inline nlohmann::json to_json(const ExchangeSpec& s) {
  return {{"axis", to_string(s.axis)}, {"policy", to_string(s.policy)}, {"step", s.step},
          {"offset", s.offset},        {"p", s.p},                      {"seed", s.seed}};
}

inline ExchangeSpec exchange_from_json(const nlohmann::json& j) {
  ExchangeSpec s;
  s.axis = parse_axis(j.at("axis").get<std::string>());
  s.policy = parse_policy(j.at("policy").get<std::string>());
  s.step = j.at("step").get<std::uint32_t>();
  s.offset = j.at("offset").get<std::uint32_t>();
  s.p = j.at("p").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

inline nlohmann::json to_json(const model::ArchConfig& a) {
  return {{"in_channels", a.in_channels},
          {"height", a.height},
          {"width", a.width},
          {"levels", a.levels},
          {"channels", a.channels},
          {"blocks", a.blocks},
          {"decoder_blocks", a.decoder_blocks},
          {"neck_channels", a.neck_channels},
          {"bottleneck_ratio", a.bottleneck_ratio},
          {"head", model::to_string(a.head)},
          {"exchange", to_json(a.exchange)}};
}

inline model::ArchConfig arch_from_json(const nlohmann::json& j) {
  model::ArchConfig a;
  a.in_channels = j.at("in_channels").get<std::size_t>();
  a.height = j.at("height").get<std::size_t>();
  a.width = j.at("width").get<std::size_t>();
  a.levels = j.at("levels").get<std::size_t>();
  a.channels = j.at("channels").get<std::vector<std::size_t>>();
  a.blocks = j.at("blocks").get<std::size_t>();
  a.decoder_blocks = j.at("decoder_blocks").get<std::size_t>();
  a.neck_channels = j.at("neck_channels").get<std::size_t>();
  a.bottleneck_ratio = j.at("bottleneck_ratio").get<std::size_t>();
  a.head = model::parse_head(j.at("head").get<std::string>());
  a.exchange = exchange_from_json(j.at("exchange"));
  a.validate();
  return a;
}

struct Checkpoint {
  model::Model model;
  std::optional<AdamW> optimizer;
  nlohmann::json extra;  // free-form provenance (config hash, epoch, val IoU)
};

inline void save_checkpoint(const std::filesystem::path& dir, const model::Model& m, const AdamW* opt = nullptr,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "params");
  nlohmann::json manifest;
  manifest["arch"] = to_json(m.config);
  manifest["extra"] = extra;
  auto& names = manifest["params"] = nlohmann::json::array();
  for (const auto& [name, t] : m.params) {
    bt::write(dir / "params" / (name + ".bt"), t);
    names.push_back(name);
  }
  if (opt) {
    fs::create_directories(dir / "optim");
    const auto& o = opt->options();
    manifest["optimizer"] = {{"lr", o.lr},   {"beta1", o.beta1},   {"beta2", o.beta2},
                             {"eps", o.eps}, {"weight_decay", o.weight_decay}, {"steps", opt->steps()}};
    for (const auto& [name, mom] : opt->moments()) {
      const Shape s{mom.m.size()};
      bt::write(dir / "optim" / (name + ".m.bt"), Tensor(s, mom.m));
      bt::write(dir / "optim" / (name + ".v.bt"), Tensor(s, mom.v));
    }
  }
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  if (!f) throw FormatError("cannot write " + (dir / "manifest.json").string());
  f << manifest.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream f(path);
  if (!f) throw FormatError("missing checkpoint manifest " + path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  Checkpoint ck;
  ck.model.config = arch_from_json(manifest.at("arch"));
  const auto expected = model::init_params(ck.model.config, 0);
  for (const auto& name : manifest.at("params")) {
    const auto n = name.get<std::string>();
    auto t = bt::read(dir / "params" / (n + ".bt"));
    if (!expected.contains(n) || expected.at(n).shape() != t.shape()) {
      throw FormatError(dir.string() + ": parameter '" + n + "' does not fit the recorded architecture");
    }
    ck.model.params.add(n, std::move(t));
  }
  if (ck.model.params.size() != expected.size()) {
    throw FormatError(dir.string() + ": checkpoint holds " + std::to_string(ck.model.params.size()) +
                      " parameters, architecture needs " + std::to_string(expected.size()));
  }
  if (manifest.contains("optimizer")) {
    const auto& o = manifest["optimizer"];
    AdamWOptions opts{o.at("lr"), o.at("beta1"), o.at("beta2"), o.at("eps"), o.at("weight_decay")};
    AdamW opt(opts);
    std::unordered_map<std::string, AdamW::Moments> moments;
    for (const auto& [name, t] : ck.model.params) {
      const auto mp = dir / "optim" / (name + ".m.bt");
      if (!std::filesystem::exists(mp)) continue;
      moments[name] = {bt::read(mp).values(), bt::read(dir / "optim" / (name + ".v.bt")).values()};
    }
    opt.restore(o.at("steps").get<std::uint64_t>(), std::move(moments));
    ck.optimizer = std::move(opt);
  }
  ck.extra = manifest.value("extra", nlohmann::json::object());
  return ck;
}

}  // namespace seed
