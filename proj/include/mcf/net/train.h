#pragma once
#include <cstdint>
#include <mcf/core/rng.h>
#include <mcf/net/model.h>
#include <vector>

namespace mcf::net {

struct TrainConfig {
  int steps{2000};
  int batch_size{16};
  double learning_rate{1e-3};
  double beta1{0.9};
  double beta2{0.999};
  double adam_eps{1e-8};
  double grad_clip{1.0}; // global L2 norm; <= 0 disables
  bool ot_align{true};
  flow::LossWeights loss;
  std::uint64_t seed{0};

  void validate() const;
};

struct AdamState {
  std::vector<Mat> m;
  std::vector<Mat> v;
  long step{0};
};

struct StepRecord {
  long step{0};
  double loss{0.0};
  double lattice{0.0};
  double rotation{0.0};
  double frac{0.0};
};

/// Fits the lattice prior and descriptor statistics on the training set.
void fit_statistics(Model &model, const std::vector<CrystalExample> &train);

/// Draws one training batch: base sample, OT coupling, interpolation, target.
std::vector<BatchItem> draw_batch(const Model &model,
                                  const std::vector<CrystalExample> &data,
                                  int batch_size, bool ot, Rng &rng);

class Trainer {
public:
  Trainer(Model &model, std::vector<CrystalExample> data, TrainConfig cfg);

  StepRecord step();
  std::vector<StepRecord> run(int n_steps);

  /// Mean loss over n_draws batches without gradients; uses its own rng.
  double evaluate(const std::vector<CrystalExample> &data, std::uint64_t seed,
                  int n_draws) const;

  AdamState &adam() { return m_adam; }
  Rng &rng() { return m_rng; }
  const TrainConfig &config() const { return m_cfg; }
  const std::vector<CrystalExample> &data() const { return m_data; }

private:
  void apply_gradients();

  Model &m_model;
  std::vector<CrystalExample> m_data;
  TrainConfig m_cfg;
  AdamState m_adam;
  Rng m_rng;
};

} // namespace mcf::net
