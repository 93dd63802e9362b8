#pragma once
#include <cstdint>
#include <mcf/crystal.h>
#include <mcf/descriptors.h>
#include <mcf/flowmatch.h>
#include <mcf/net/egnn.h>
#include <mcf/net/mcnet.h>
#include <optional>
#include <string>
#include <vector>

namespace mcf::net {

struct ModelConfig {
  EgnnConfig egnn;
  McnetConfig mcnet;
};

/// A decomposed training crystal with one molecule input per block type.
struct CrystalExample {
  std::string id;
  flow::FlowSample data;               // t = 1 endpoint
  std::vector<int> block_type;         // index into molecules
  std::vector<MoleculeInput> molecules; // raw (unstandardised) descriptors
};

/// Builds an example; descriptors come from `override_descriptors` when given.
CrystalExample make_example(
    const crystal::MolecularCrystal &c,
    const std::optional<descriptors::DescriptorVector> &override_descriptors = {});

MoleculeInput make_molecule_input(const std::vector<std::string> &species,
                                  const MatN3 &coords);

struct BatchItem {
  const CrystalExample *example{nullptr};
  flow::FlowSample state;
  flow::VelocityTarget target;
};

struct BatchLoss {
  ad::Tensor total;
  double lattice{0.0};
  double rotation{0.0};
  double frac{0.0};
};

class Model {
public:
  Model(const ModelConfig &cfg, std::uint64_t seed);

  const ModelConfig &config() const { return m_cfg; }
  ParameterStore &params() { return m_store; }
  const ParameterStore &params() const { return m_store; }
  const Egnn &egnn() const { return m_egnn; }
  const McNet &mcnet() const { return m_mcnet; }

  descriptors::DescriptorScaler scaler = descriptors::DescriptorScaler::identity();
  flow::PriorSpec prior;

  /// Building-block embeddings for molecules with raw descriptors.
  ad::Tensor embed(const std::vector<MoleculeInput> &molecules) const;

  McnetOutput forward(const std::vector<BatchItem> &batch) const;
  BatchLoss loss(const std::vector<BatchItem> &batch,
                 const flow::LossWeights &w = {}) const;

  /// Inference for one state given precomputed embeddings.
  flow::Prediction predict(const flow::FlowSample &state, const Mat &embeddings,
                           const std::vector<int> &embedding_rows) const;

private:
  ModelConfig m_cfg;
  ParameterStore m_store;
  Egnn m_egnn;
  McNet m_mcnet;
};

flow::Prediction to_prediction(const McnetOutput &out, int crystal);

} // namespace mcf::net
