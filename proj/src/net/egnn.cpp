#include <algorithm>
#include <mcf/core/error.h>
#include <mcf/elements.h>
#include <mcf/net/egnn.h>

namespace mcf::net {

void EgnnConfig::validate() const {
  if (n_layers < 1 || hidden_dim < 1 || n_rbf < 1 || !(cutoff > 0.0))
    throw Error(ErrorKind::Config, "egnn config values must be positive");
}

Egnn::Egnn(ParameterStore &store, const EgnnConfig &cfg, Rng &rng) : m_cfg(cfg) {
  m_cfg.validate();
  m_vocab = cfg.vocabulary;
  if (m_vocab.empty())
    for (const auto &e : element_table())
      m_vocab.emplace_back(e.symbol);
  const int h = cfg.hidden_dim;
  Mat table(static_cast<Eigen::Index>(m_vocab.size()), h);
  for (Eigen::Index i = 0; i < table.size(); i++)
    table.data()[i] = rng.normal();
  m_atom_embedding = store.add("egnn.atom_embedding", std::move(table));
  for (int l = 0; l < cfg.n_layers; l++) {
    const auto p = "egnn.layer" + std::to_string(l);
    m_message.push_back(
        Mlp::create(store, p + ".message", {2 * h + 1 + cfg.n_rbf, h, h}, rng));
    m_update.push_back(Mlp::create(store, p + ".update", {2 * h, h, h}, rng));
  }
  m_pool_weight = Mlp::create(store, "egnn.pool", {h + 1, h, 1}, rng);
}

int Egnn::vocab_index(const std::string &symbol) const {
  auto it = std::find(m_vocab.begin(), m_vocab.end(), symbol);
  if (it == m_vocab.end())
    throw Error(ErrorKind::UnknownElement, "symbol not in vocabulary: " + symbol);
  return static_cast<int>(it - m_vocab.begin());
}

ad::Tensor Egnn::embed(const std::vector<const MoleculeInput *> &molecules) const {
  if (molecules.empty())
    throw Error(ErrorKind::InvalidInput, "egnn: no molecules");
  std::vector<int> atom_type, atom_mol, src, dst;
  std::vector<double> centroid_dist;
  std::vector<Vec> edge_feat;
  int offset = 0;
  for (std::size_t m = 0; m < molecules.size(); m++) {
    const auto &mol = *molecules[m];
    const int n = static_cast<int>(mol.species.size());
    if (n == 0 || mol.coords.rows() != n)
      throw Error(ErrorKind::InvalidInput, "egnn: empty or malformed molecule");
    const RowVec3 c = mol.coords.colwise().mean();
    for (int i = 0; i < n; i++) {
      atom_type.push_back(vocab_index(mol.species[i]));
      atom_mol.push_back(static_cast<int>(m));
      centroid_dist.push_back((mol.coords.row(i) - c).norm());
    }
    for (int i = 0; i < n; i++)
      for (int j = 0; j < n; j++) {
        if (i == j)
          continue;
        const double d = (mol.coords.row(i) - mol.coords.row(j)).norm();
        if (d > m_cfg.cutoff)
          continue;
        src.push_back(offset + i);
        dst.push_back(offset + j);
        Vec f(1 + m_cfg.n_rbf);
        f(0) = d * d / (m_cfg.cutoff * m_cfg.cutoff);
        f.tail(m_cfg.n_rbf) = rbf_embed(d, m_cfg.cutoff, m_cfg.n_rbf);
        edge_feat.push_back(std::move(f));
      }
    offset += n;
  }
  const int n_atoms = offset;
  const int n_mol = static_cast<int>(molecules.size());

  ad::Tensor h = ad::gather_rows(m_atom_embedding, atom_type);
  Mat ef(static_cast<Eigen::Index>(edge_feat.size()), 1 + m_cfg.n_rbf);
  for (std::size_t e = 0; e < edge_feat.size(); e++)
    ef.row(static_cast<Eigen::Index>(e)) = edge_feat[e].transpose();
  const ad::Tensor edge_const = ad::constant(std::move(ef));

  for (int l = 0; l < m_cfg.n_layers; l++) {
    ad::Tensor agg;
    if (!src.empty()) {
      ad::Tensor msg = m_message[l](ad::concat_cols(
          {ad::gather_rows(h, src), ad::gather_rows(h, dst), edge_const}));
      agg = ad::segment_sum(msg, src, n_atoms);
    } else {
      agg = ad::constant(Mat::Zero(n_atoms, m_cfg.hidden_dim));
    }
    h = m_update[l](ad::concat_cols({h, agg}));
  }

  Mat dist(n_atoms, 1);
  for (int i = 0; i < n_atoms; i++)
    dist(i, 0) = centroid_dist[i];
  ad::Tensor logits = m_pool_weight(ad::concat_cols({h, ad::constant(std::move(dist))}));
  ad::Tensor w = ad::segment_softmax(logits, atom_mol, n_mol);
  ad::Tensor pooled = ad::segment_sum(ad::mul_rowwise(h, w), atom_mol, n_mol);

  Mat desc(n_mol, descriptors::kNumDescriptors);
  for (int m = 0; m < n_mol; m++)
    for (int k = 0; k < descriptors::kNumDescriptors; k++)
      desc(m, k) = molecules[m]->descriptors[k];
  return ad::concat_cols({pooled, ad::constant(std::move(desc))});
}

} // namespace mcf::net
