#pragma once
#include <mcf/flowmatch.h>
#include <mcf/net/layers.h>
#include <vector>

namespace mcf::net {

struct McnetConfig {
  int n_layers{4};
  int hidden_dim{128};
  int fourier_k{8};
  int time_embed_dim{64};
  int chi_embed_dim{16};
  int kappa_dim{16};

  void validate() const;
};

/// psi_FT(omega / 2 pi) followed by psi_FT(rho / 2 pi) of a relative rotation;
/// kappa is returned separately since it feeds a learned map.
Vec so3_rel_fourier(const Rotation &rel, int k, double *kappa = nullptr);

struct McnetBatch {
  std::vector<const flow::FlowSample *> states;
  /// Per crystal, per block: row of the building-block embedding matrix.
  std::vector<std::vector<int>> embedding_rows;
};

struct McnetOutput {
  ad::Tensor rot_increment;    // N x 3, axis-angle in the block frame
  ad::Tensor rot1;             // N x 9, R_t exp(increment)
  ad::Tensor u_frac;           // N x 3
  ad::Tensor lattice_transform; // B x 9, invariant Phi
  ad::Tensor lattice1;         // B x 9, L_t + Phi L_t
  std::vector<int> block_offset; // first block row of each crystal, plus total
};

/// Periodic E(3)-invariant message passing over building blocks.
class McNet {
public:
  McNet() = default;
  McNet(ParameterStore &store, const McnetConfig &cfg, int bb_dim, Rng &rng);

  McnetOutput forward(const McnetBatch &batch, const ad::Tensor &bb_embeddings) const;
  const McnetConfig &config() const { return m_cfg; }
  int edge_dim() const;

private:
  McnetConfig m_cfg;
  Mlp m_input;
  ad::Tensor m_chi_embedding;
  Mlp m_kappa;
  std::vector<Mlp> m_chi_fuse;
  std::vector<Mlp> m_message;
  std::vector<Mlp> m_update;
  Mlp m_rot_head;
  Mlp m_frac_head;
  Mlp m_lattice_head;
};

/// h + MLP(h concat chi embedding).
ad::Tensor chi_fuse(const ad::Tensor &h, const std::vector<int> &chi,
                    const ad::Tensor &chi_embedding, const Mlp &mlp);

} // namespace mcf::net
