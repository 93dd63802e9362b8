#include <cmath>
#include <mcf/core/error.h>
#include <mcf/manifold.h>
#include <mcf/net/mcnet.h>

namespace mcf::net {

namespace mf = mcf::manifold;

namespace {
constexpr double kUnitEps = 1e-8;
constexpr double kGramScale = 1.0 / 100.0; // (10 Angstrom)^-2

constexpr int kLatticeFrameDim = 9;
constexpr int kGramDim = 6;
constexpr int kRotLatticeDim = 9;
constexpr int kFracLatticeDim = 3;

template <typename Derived> Eigen::VectorXd unit(const Eigen::MatrixBase<Derived> &v) {
  return v / (v.norm() + kUnitEps);
}

Eigen::Matrix<double, 1, 9> flatten(const Mat3 &m) {
  Eigen::Matrix<double, 1, 9> out;
  for (int r = 0; r < 3; r++)
    for (int c = 0; c < 3; c++)
      out(3 * r + c) = m(r, c);
  return out;
}
} // namespace

void McnetConfig::validate() const {
  if (n_layers < 1 || hidden_dim < 1 || fourier_k < 1 || time_embed_dim < 1 ||
      chi_embed_dim < 1 || kappa_dim < 1)
    throw Error(ErrorKind::Config, "mcnet config values must be positive");
}

Vec so3_rel_fourier(const Rotation &rel, int k, double *kappa) {
  const auto sph = mf::axis_angle_to_spherical(mf::so3_log(rel));
  Vec out(4 * k);
  out.head(2 * k) = fourier_embed(sph.omega / (2.0 * kPi), k);
  out.tail(2 * k) = fourier_embed(sph.rho / (2.0 * kPi), k);
  if (kappa)
    *kappa = sph.kappa;
  return out;
}

int McNet::edge_dim() const {
  return kGramDim + 6 * m_cfg.fourier_k + 4 * m_cfg.fourier_k + kRotLatticeDim +
         kFracLatticeDim;
}

McNet::McNet(ParameterStore &store, const McnetConfig &cfg, int bb_dim, Rng &rng)
    : m_cfg(cfg) {
  m_cfg.validate();
  const int h = cfg.hidden_dim;
  m_input = Mlp::create(store, "mcnet.input",
                        {bb_dim + cfg.time_embed_dim + kLatticeFrameDim, h, h}, rng);
  Mat chi(2, cfg.chi_embed_dim);
  for (Eigen::Index i = 0; i < chi.size(); i++)
    chi.data()[i] = rng.normal();
  m_chi_embedding = store.add("mcnet.chi_embedding", std::move(chi));
  m_kappa = Mlp::create(store, "mcnet.kappa", {1, cfg.kappa_dim, cfg.kappa_dim}, rng);
  for (int l = 0; l < cfg.n_layers; l++) {
    const auto p = "mcnet.layer" + std::to_string(l);
    m_chi_fuse.push_back(
        Mlp::create(store, p + ".chi_fuse", {h + cfg.chi_embed_dim, h, h}, rng, 0.1));
    m_message.push_back(Mlp::create(
        store, p + ".message", {2 * h + edge_dim() + cfg.kappa_dim, h, h}, rng));
    m_update.push_back(Mlp::create(store, p + ".update", {2 * h, h, h}, rng, 0.1));
  }
  m_rot_head = Mlp::create(store, "mcnet.head_rotation", {h, h, 3}, rng, 0.1);
  m_frac_head = Mlp::create(store, "mcnet.head_frac", {h, h, 3}, rng);
  m_lattice_head = Mlp::create(store, "mcnet.head_lattice", {h, h, 9}, rng, 0.1);
}

ad::Tensor chi_fuse(const ad::Tensor &h, const std::vector<int> &chi,
                    const ad::Tensor &chi_embedding, const Mlp &mlp) {
  return ad::add(h, mlp(ad::concat_cols({h, ad::gather_rows(chi_embedding, chi)})));
}

McnetOutput McNet::forward(const McnetBatch &batch,
                           const ad::Tensor &bb_embeddings) const {
  const int n_crystals = static_cast<int>(batch.states.size());
  if (n_crystals == 0 || batch.embedding_rows.size() != batch.states.size())
    throw Error(ErrorKind::InvalidInput, "mcnet: empty or inconsistent batch");

  McnetOutput out;
  std::vector<int> emb_rows, chi, crystal_of;
  std::vector<int> src, dst;
  const int k = m_cfg.fourier_k;
  const int edim = edge_dim();
  std::vector<Eigen::VectorXd> node_feat, edge_feat;
  std::vector<double> kappas;
  int offset = 0;
  for (int b = 0; b < n_crystals; b++) {
    const auto &s = *batch.states[b];
    const int n = static_cast<int>(s.size());
    if (n == 0)
      throw Error(ErrorKind::InvalidInput, "mcnet: crystal without blocks");
    if (static_cast<int>(batch.embedding_rows[b].size()) != n)
      throw Error(ErrorKind::InvalidInput, "mcnet: embedding rows != blocks");
    out.block_offset.push_back(offset);
    const Mat3 &l = s.lattice;
    const Mat3 gram = l * l.transpose() * kGramScale;
    const Mat3 metric = l.transpose() * l;
    const Vec temb = time_embed(s.t, m_cfg.time_embed_dim);
    for (int i = 0; i < n; i++) {
      emb_rows.push_back(batch.embedding_rows[b][i]);
      chi.push_back(s.chi[i]);
      crystal_of.push_back(b);
      Eigen::VectorXd f(m_cfg.time_embed_dim + kLatticeFrameDim);
      f.head(m_cfg.time_embed_dim) = temb;
      const Mat3 in_frame = l * s.rot[i];
      for (int r = 0; r < 3; r++)
        f.segment(m_cfg.time_embed_dim + 3 * r, 3) = unit(in_frame.row(r).transpose());
      node_feat.push_back(std::move(f));
    }
    for (int i = 0; i < n; i++)
      for (int j = 0; j < n; j++) {
        src.push_back(offset + i);
        dst.push_back(offset + j);
        Eigen::VectorXd e(edim);
        int at = 0;
        for (auto [r, c] : {std::pair{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}})
          e(at++) = gram(r, c);
        const Vec3 df = mf::torus_displacement(s.frac[i], s.frac[j]);
        for (int d = 0; d < 3; d++) {
          e.segment(at, 2 * k) = fourier_embed(df(d), k);
          at += 2 * k;
        }
        double kappa = 0.0;
        e.segment(at, 4 * k) =
            so3_rel_fourier(s.rot[i].transpose() * s.rot[j], k, &kappa);
        at += 4 * k;
        e.segment(at, 9) =
            unit(flatten(s.rot[i].transpose() * metric * s.rot[j]).transpose());
        at += 9;
        e.segment(at, 3) = unit(gram * df);
        edge_feat.push_back(std::move(e));
        kappas.push_back(kappa);
      }
    offset += n;
  }
  out.block_offset.push_back(offset);
  const int n_blocks = offset;

  Mat nf(n_blocks, m_cfg.time_embed_dim + kLatticeFrameDim);
  for (int i = 0; i < n_blocks; i++)
    nf.row(i) = node_feat[i].transpose();
  Mat ef(static_cast<Eigen::Index>(edge_feat.size()), edim);
  Mat kf(static_cast<Eigen::Index>(edge_feat.size()), 1);
  for (std::size_t e = 0; e < edge_feat.size(); e++) {
    ef.row(static_cast<Eigen::Index>(e)) = edge_feat[e].transpose();
    kf(static_cast<Eigen::Index>(e), 0) = kappas[e];
  }
  const ad::Tensor edge_const = ad::concat_cols(
      {ad::constant(std::move(ef)), m_kappa(ad::constant(std::move(kf)))});

  ad::Tensor h = m_input(ad::concat_cols(
      {ad::gather_rows(bb_embeddings, emb_rows), ad::constant(std::move(nf))}));
  for (int l = 0; l < m_cfg.n_layers; l++) {
    h = chi_fuse(h, chi, m_chi_embedding, m_chi_fuse[l]);
    ad::Tensor msg = m_message[l](ad::concat_cols(
        {ad::gather_rows(h, src), ad::gather_rows(h, dst), edge_const}));
    ad::Tensor agg = ad::segment_sum(msg, src, n_blocks);
    h = ad::add(h, m_update[l](ad::concat_cols({h, agg})));
  }

  Mat rt(n_blocks, 9), lt(n_crystals, 9);
  for (int b = 0; b < n_crystals; b++) {
    const auto &s = *batch.states[b];
    lt.row(b) = flatten(s.lattice);
    for (std::size_t i = 0; i < s.size(); i++)
      rt.row(out.block_offset[b] + static_cast<int>(i)) = flatten(s.rot[i]);
  }
  out.rot_increment = m_rot_head(h);
  out.rot1 = ad::rowmat_mul(ad::constant(std::move(rt)),
                            ad::so3_exp_rows(out.rot_increment));
  out.u_frac = m_frac_head(h);
  out.lattice_transform =
      m_lattice_head(ad::segment_mean(h, crystal_of, n_crystals));
  const ad::Tensor lat = ad::constant(std::move(lt));
  out.lattice1 = ad::add(lat, ad::rowmat_mul(out.lattice_transform, lat));
  return out;
}

} // namespace mcf::net
