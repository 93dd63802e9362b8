#include <map>
#include <mcf/core/error.h>
#include <mcf/manifold.h>
#include <mcf/net/model.h>

namespace mcf::net {

namespace {
Mat3 unflatten(const Mat &m, Eigen::Index row) {
  Mat3 out;
  for (int r = 0; r < 3; r++)
    for (int c = 0; c < 3; c++)
      out(r, c) = m(row, 3 * r + c);
  return out;
}

Eigen::Matrix<double, 1, 9> flatten(const Mat3 &m) {
  Eigen::Matrix<double, 1, 9> out;
  for (int r = 0; r < 3; r++)
    for (int c = 0; c < 3; c++)
      out(3 * r + c) = m(r, c);
  return out;
}
} // namespace

MoleculeInput make_molecule_input(const std::vector<std::string> &species,
                                  const MatN3 &coords) {
  MoleculeInput m;
  m.species = species;
  m.coords = coords;
  m.descriptors = descriptors::compute(
      descriptors::MolecularGraph::from_coordinates(species, coords));
  return m;
}

CrystalExample make_example(
    const crystal::MolecularCrystal &c,
    const std::optional<descriptors::DescriptorVector> &override_descriptors) {
  CrystalExample ex;
  ex.id = c.id;
  ex.data = flow::from_crystal(c);
  std::map<int, int> type_slot;
  for (const auto &b : c.blocks) {
    auto it = type_slot.find(b.type_id);
    if (it == type_slot.end()) {
      it = type_slot.emplace(b.type_id, static_cast<int>(ex.molecules.size())).first;
      auto mol = make_molecule_input(b.species, b.internal);
      if (override_descriptors)
        mol.descriptors = *override_descriptors;
      ex.molecules.push_back(std::move(mol));
    }
    ex.block_type.push_back(it->second);
  }
  return ex;
}

Model::Model(const ModelConfig &cfg, std::uint64_t seed) : m_cfg(cfg) {
  Rng rng(seed);
  m_egnn = Egnn(m_store, cfg.egnn, rng);
  m_mcnet = McNet(m_store, cfg.mcnet, m_egnn.output_dim(), rng);
}

ad::Tensor Model::embed(const std::vector<MoleculeInput> &molecules) const {
  std::vector<MoleculeInput> scaled = molecules;
  std::vector<const MoleculeInput *> ptrs;
  for (auto &m : scaled) {
    m.descriptors = scaler.apply(m.descriptors);
    ptrs.push_back(&m);
  }
  return m_egnn.embed(ptrs);
}

McnetOutput Model::forward(const std::vector<BatchItem> &batch) const {
  std::vector<MoleculeInput> molecules;
  McnetBatch mb;
  for (const auto &item : batch) {
    const int base = static_cast<int>(molecules.size());
    for (const auto &m : item.example->molecules)
      molecules.push_back(m);
    std::vector<int> rows;
    for (int t : item.example->block_type)
      rows.push_back(base + t);
    mb.states.push_back(&item.state);
    mb.embedding_rows.push_back(std::move(rows));
  }
  return m_mcnet.forward(mb, embed(molecules));
}

BatchLoss Model::loss(const std::vector<BatchItem> &batch,
                      const flow::LossWeights &w) const {
  if (batch.empty())
    throw Error(ErrorKind::InvalidInput, "loss: empty batch");
  const McnetOutput out = forward(batch);
  const auto n_crystals = static_cast<Eigen::Index>(batch.size());
  const int n_blocks = out.block_offset.back();
  const double inv_b = 1.0 / static_cast<double>(n_crystals);

  Mat l1(n_crystals, 9), rt_inv(n_blocks, 9), log_target(n_blocks, 3),
      u_frac(n_blocks, 3);
  std::vector<double> w_lat(n_crystals), w_rot(n_blocks), w_frac(n_blocks);
  for (Eigen::Index b = 0; b < n_crystals; b++) {
    const auto &item = batch[b];
    const double tw = flow::time_weight(item.state.t, w.t_clip);
    l1.row(b) = flatten(item.target.lattice1);
    w_lat[b] = tw * w.lattice * inv_b;
    const auto n = static_cast<double>(item.state.size());
    for (std::size_t i = 0; i < item.state.size(); i++) {
      const int row = out.block_offset[b] + static_cast<int>(i);
      const Mat3 inv = item.state.rot[i].transpose();
      rt_inv.row(row) = flatten(inv);
      log_target.row(row) =
          manifold::so3_log(inv * item.target.rot1[i]).transpose();
      u_frac.row(row) = item.target.u_frac[i].transpose();
      w_rot[row] = tw * w.rotation * inv_b / n;
      w_frac[row] = w.frac * inv_b / n;
    }
  }
  ad::Tensor lat = ad::weighted_sq_sum(
      ad::sub(out.lattice1, ad::constant(std::move(l1))), w_lat);
  ad::Tensor rel = ad::rowmat_mul(ad::constant(std::move(rt_inv)), out.rot1);
  ad::Tensor rot = ad::weighted_sq_sum(
      ad::sub(ad::so3_log_rows(rel), ad::constant(std::move(log_target))), w_rot);
  ad::Tensor frac = ad::weighted_sq_sum(
      ad::sub(out.u_frac, ad::constant(std::move(u_frac))), w_frac);

  BatchLoss result;
  result.lattice = lat.item();
  result.rotation = rot.item();
  result.frac = frac.item();
  result.total = ad::add(ad::add(lat, rot), frac);
  return result;
}

flow::Prediction to_prediction(const McnetOutput &out, int crystal) {
  flow::Prediction p;
  p.lattice1 = unflatten(out.lattice1.value(), crystal);
  for (int row = out.block_offset[crystal]; row < out.block_offset[crystal + 1];
       row++) {
    p.rot1.push_back(unflatten(out.rot1.value(), row));
    p.u_frac.push_back(out.u_frac.value().row(row).transpose());
  }
  return p;
}

flow::Prediction Model::predict(const flow::FlowSample &state,
                                const Mat &embeddings,
                                const std::vector<int> &embedding_rows) const {
  ad::NoGradGuard guard;
  McnetBatch mb;
  mb.states.push_back(&state);
  mb.embedding_rows.push_back(embedding_rows);
  return to_prediction(m_mcnet.forward(mb, ad::constant(embeddings)), 0);
}

} // namespace mcf::net
