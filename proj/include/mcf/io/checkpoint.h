#pragma once
#include <memory>
#include <nlohmann/json.hpp>
#include <mcf/net/model.h>
#include <mcf/net/train.h>
#include <optional>
#include <string>

namespace mcf::io {

struct TrainerSnapshot {
  net::AdamState adam;
  std::string rng_state;
  net::TrainConfig config;
};

struct Checkpoint {
  std::unique_ptr<net::Model> model;
  std::uint64_t init_seed{0};
  std::optional<TrainerSnapshot> trainer;
};

nlohmann::json prior_to_json(const flow::PriorSpec &p);
flow::PriorSpec prior_from_json(const nlohmann::json &j);

/// Self-describing JSON container: format version, model config, parameters,
/// prior, descriptor statistics and optional optimiser/rng state.
void save_checkpoint(const std::string &path, const net::Model &model,
                     std::uint64_t init_seed,
                     const std::optional<TrainerSnapshot> &trainer = std::nullopt);
Checkpoint load_checkpoint(const std::string &path);

TrainerSnapshot snapshot(net::Trainer &trainer);
/// Restores optimiser and rng state into a freshly constructed trainer.
void restore(net::Trainer &trainer, const TrainerSnapshot &snap);

} // namespace mcf::io
