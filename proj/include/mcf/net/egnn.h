#pragma once
#include <mcf/descriptors.h>
#include <mcf/net/layers.h>
#include <string>
#include <vector>

namespace mcf::net {

struct EgnnConfig {
  int n_layers{4};
  int hidden_dim{128};
  double cutoff{5.0};
  int n_rbf{32};
  std::vector<std::string> vocabulary; // empty means the element table

  void validate() const;
};

struct MoleculeInput {
  std::vector<std::string> species;
  MatN3 coords;
  descriptors::DescriptorVector descriptors{}; // already standardised
};

/// Invariant building-block embedder: message passing over atom pairs within
/// the cutoff, softmax-weighted pooling, and descriptor concatenation.
class Egnn {
public:
  Egnn() = default;
  Egnn(ParameterStore &store, const EgnnConfig &cfg, Rng &rng);

  /// One row per molecule: pooled features followed by the descriptors.
  ad::Tensor embed(const std::vector<const MoleculeInput *> &molecules) const;
  int output_dim() const { return m_cfg.hidden_dim + descriptors::kNumDescriptors; }
  const EgnnConfig &config() const { return m_cfg; }

private:
  int vocab_index(const std::string &symbol) const;

  EgnnConfig m_cfg;
  std::vector<std::string> m_vocab;
  ad::Tensor m_atom_embedding;
  std::vector<Mlp> m_message;
  std::vector<Mlp> m_update;
  Mlp m_pool_weight;
};

} // namespace mcf::net
