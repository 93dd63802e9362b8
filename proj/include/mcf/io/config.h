#pragma once
#include <cstdint>
#include <mcf/crystal.h>
#include <mcf/eval/matcher.h>
#include <mcf/net/model.h>
#include <mcf/net/train.h>
#include <mcf/sampler.h>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace mcf::io {

struct Paths {
  std::string dataset;     // raw structures (JSONL or extended XYZ)
  std::string processed;   // decomposed records
  std::string output_dir{"."};
  std::string checkpoint;
  std::string descriptors; // optional sidecar
  std::string prior;       // fitted prior; empty means fit at train time
  std::string targets;     // structures whose molecule, Z and chi seed sampling
  std::string conformer;   // plain XYZ molecule, alternative to targets
  std::string predictions;
  std::string references;
};

struct SampleOptions {
  int n_samples{10};
  int z{0};          // 0 takes Z from each target
  std::string chi;   // "same", "half", explicit 0/1 string, or empty for the target's
};

struct TrainExtras {
  int checkpoint_every{0};   // steps; 0 writes only the final checkpoint
  double val_fraction{0.2};  // used only when records carry no split tags
  int val_batches{4};
  bool resume{false};        // continue from paths.checkpoint
};

struct RunConfig {
  std::uint64_t seed{0};
  Paths paths;
  net::ModelConfig model;
  net::TrainConfig train;
  TrainExtras train_extras;
  sampler::SamplerConfig sampler;
  eval::MatchCriteria evaluation;
  SampleOptions sample;
  std::vector<double> stol_grid{0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2};
  bool sweep{false};
  crystal::DecomposeOptions decompose;
};

/// Full default document; every accepted key appears here.
nlohmann::json default_config_json();

/// Merges `user` over the defaults. Unknown keys throw Config naming the
/// dotted key path.
RunConfig load_config(const nlohmann::json &user);
RunConfig load_config_file(const std::string &path);

nlohmann::json to_json(const RunConfig &cfg);

nlohmann::json to_json(const net::ModelConfig &cfg);
net::ModelConfig model_config_from_json(const nlohmann::json &j);

} // namespace mcf::io
