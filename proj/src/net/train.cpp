#include <cmath>
#include <fmt/core.h>
#include <mcf/core/error.h>
#include <mcf/net/train.h>

namespace mcf::net {

void TrainConfig::validate() const {
  if (steps < 0 || batch_size < 1)
    throw Error(ErrorKind::Config, "train: steps >= 0 and batch_size >= 1 required");
  if (learning_rate < 0.0 || beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 ||
      beta2 >= 1.0 || adam_eps <= 0.0)
    throw Error(ErrorKind::Config, "train: invalid optimizer settings");
}

void fit_statistics(Model &model, const std::vector<CrystalExample> &train) {
  if (train.empty())
    throw Error(ErrorKind::InvalidInput, "training set is empty");
  std::vector<Lattice> lattices;
  std::vector<descriptors::DescriptorVector> desc;
  for (const auto &ex : train) {
    lattices.push_back(ex.data.lattice);
    for (const auto &m : ex.molecules)
      desc.push_back(m.descriptors);
  }
  model.prior = flow::fit_lattice_prior(lattices);
  model.scaler = descriptors::DescriptorScaler::fit(desc);
}

std::vector<BatchItem> draw_batch(const Model &model,
                                  const std::vector<CrystalExample> &data,
                                  int batch_size, bool ot, Rng &rng) {
  std::vector<BatchItem> batch;
  for (int b = 0; b < batch_size; b++) {
    const auto &ex = data[rng.index(data.size())];
    const double t = rng.uniform();
    flow::FlowSample c0 = flow::sample_base(static_cast<int>(ex.data.size()),
                                            ex.data.chi, model.prior, rng);
    if (ot)
      c0 = flow::ot_align(c0, ex.data);
    BatchItem item;
    item.example = &ex;
    item.state = flow::interpolate(c0, ex.data, t);
    item.target = flow::conditional_velocity(c0, ex.data, t);
    batch.push_back(std::move(item));
  }
  return batch;
}

Trainer::Trainer(Model &model, std::vector<CrystalExample> data, TrainConfig cfg)
    : m_model(model), m_data(std::move(data)), m_cfg(cfg), m_rng(cfg.seed) {
  m_cfg.validate();
  if (m_data.empty())
    throw Error(ErrorKind::InvalidInput, "training set is empty");
  for (const auto &name : m_model.params().names()) {
    const auto &v = m_model.params().get(name).value();
    m_adam.m.push_back(Mat::Zero(v.rows(), v.cols()));
    m_adam.v.push_back(Mat::Zero(v.rows(), v.cols()));
  }
}

StepRecord Trainer::step() {
  auto batch = draw_batch(m_model, m_data, m_cfg.batch_size, m_cfg.ot_align, m_rng);
  m_model.params().zero_grad();
  BatchLoss l = m_model.loss(batch, m_cfg.loss);
  const double value = l.total.item();
  if (!std::isfinite(value)) {
    std::string ids, ts;
    for (const auto &item : batch) {
      ids += item.example->id + " ";
      ts += fmt::format("{:.6f} ", item.state.t);
    }
    throw Error(ErrorKind::NonFiniteLoss,
                fmt::format("non-finite loss at step {}; ids: {}; t: {}",
                            m_adam.step + 1, ids, ts));
  }
  ad::backward(l.total);
  apply_gradients();
  return {m_adam.step, value, l.lattice, l.rotation, l.frac};
}

std::vector<StepRecord> Trainer::run(int n_steps) {
  std::vector<StepRecord> trace;
  for (int i = 0; i < n_steps; i++)
    trace.push_back(step());
  return trace;
}

void Trainer::apply_gradients() {
  auto &store = m_model.params();
  const auto &names = store.names();
  std::vector<Mat> grads;
  double sq = 0.0;
  for (const auto &name : names) {
    grads.push_back(store.get(name).grad());
    sq += grads.back().squaredNorm();
  }
  double clip = 1.0;
  const double norm = std::sqrt(sq);
  if (m_cfg.grad_clip > 0.0 && norm > m_cfg.grad_clip)
    clip = m_cfg.grad_clip / norm;

  m_adam.step++;
  const double bc1 = 1.0 - std::pow(m_cfg.beta1, static_cast<double>(m_adam.step));
  const double bc2 = 1.0 - std::pow(m_cfg.beta2, static_cast<double>(m_adam.step));
  for (std::size_t k = 0; k < names.size(); k++) {
    const Mat g = grads[k] * clip;
    m_adam.m[k] = m_cfg.beta1 * m_adam.m[k] + (1.0 - m_cfg.beta1) * g;
    m_adam.v[k] = m_cfg.beta2 * m_adam.v[k] + (1.0 - m_cfg.beta2) * g.cwiseAbs2();
    if (m_cfg.learning_rate == 0.0)
      continue;
    ad::Tensor p = store.get(names[k]);
    const Mat update = ((m_adam.m[k] / bc1).array() /
                        ((m_adam.v[k] / bc2).array().sqrt() + m_cfg.adam_eps))
                           .matrix();
    p.mutable_value() -= m_cfg.learning_rate * update;
  }
}

double Trainer::evaluate(const std::vector<CrystalExample> &data,
                         std::uint64_t seed, int n_draws) const {
  if (data.empty() || n_draws < 1)
    return 0.0;
  ad::NoGradGuard guard;
  Rng rng(seed);
  double total = 0.0;
  for (int i = 0; i < n_draws; i++) {
    auto batch = draw_batch(m_model, data, m_cfg.batch_size, m_cfg.ot_align, rng);
    total += m_model.loss(batch, m_cfg.loss).total.item();
  }
  return total / n_draws;
}

} // namespace mcf::net
