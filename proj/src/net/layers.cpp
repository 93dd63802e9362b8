#include <cmath>
#include <mcf/core/error.h>
#include <mcf/net/layers.h>

namespace mcf::net {

ad::Tensor ParameterStore::add(const std::string &name, Mat init) {
  if (contains(name))
    throw Error(ErrorKind::InvalidParameter, "duplicate parameter " + name);
  m_index[name] = m_names.size();
  m_names.push_back(name);
  m_tensors.push_back(ad::parameter(std::move(init)));
  return m_tensors.back();
}

ad::Tensor ParameterStore::get(const std::string &name) const {
  auto it = m_index.find(name);
  if (it == m_index.end())
    throw Error(ErrorKind::InvalidParameter, "unknown parameter " + name);
  return m_tensors[it->second];
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto &t : m_tensors)
    n += static_cast<std::size_t>(t.value().size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto &t : m_tensors)
    t.node()->zero_grad();
}

Linear Linear::create(ParameterStore &store, const std::string &name, int in,
                      int out, Rng &rng, double gain) {
  Mat w(in, out);
  const double sd = gain / std::sqrt(static_cast<double>(in));
  for (Eigen::Index i = 0; i < w.size(); i++)
    w.data()[i] = sd * rng.normal();
  Linear l;
  l.weight = store.add(name + ".weight", std::move(w));
  l.bias = store.add(name + ".bias", Mat::Zero(1, out));
  return l;
}

ad::Tensor Linear::operator()(const ad::Tensor &x) const {
  return ad::add_row(ad::matmul(x, weight), bias);
}

Mlp Mlp::create(ParameterStore &store, const std::string &name,
                const std::vector<int> &dims, Rng &rng, double final_gain) {
  if (dims.size() < 2)
    throw Error(ErrorKind::InvalidParameter, "mlp needs at least two dims");
  Mlp m;
  for (std::size_t k = 0; k + 1 < dims.size(); k++) {
    const bool last = k + 2 == dims.size();
    m.layers.push_back(Linear::create(store, name + "." + std::to_string(k),
                                      dims[k], dims[k + 1], rng,
                                      last ? final_gain : 1.0));
  }
  return m;
}

ad::Tensor Mlp::operator()(const ad::Tensor &x) const {
  ad::Tensor h = x;
  for (std::size_t k = 0; k < layers.size(); k++) {
    h = layers[k](h);
    if (k + 1 < layers.size())
      h = ad::silu(h);
  }
  return h;
}

Vec rbf_embed(double d, double cutoff, int n_rbf) {
  Vec out(n_rbf);
  if (n_rbf == 1) {
    out(0) = std::exp(-0.5 * d * d / (cutoff * cutoff));
    return out;
  }
  const double spacing = cutoff / (n_rbf - 1);
  for (int k = 0; k < n_rbf; k++) {
    const double x = (d - k * spacing) / spacing;
    out(k) = std::exp(-0.5 * x * x);
  }
  return out;
}

Vec fourier_embed(double z, int k) {
  Vec out(2 * k);
  for (int i = 1; i <= k; i++) {
    const double a = 2.0 * kPi * i * z;
    out(2 * (i - 1)) = std::sin(a);
    out(2 * (i - 1) + 1) = std::cos(a);
  }
  return out;
}

Vec time_embed(double t, int dim) {
  Vec out = Vec::Zero(dim);
  const int half = dim / 2;
  for (int k = 0; k < half; k++) {
    const double f = half > 1 ? std::pow(50.0, static_cast<double>(k) / (half - 1)) : 1.0;
    out(2 * k) = std::sin(f * t);
    out(2 * k + 1) = std::cos(f * t);
  }
  if (dim % 2 == 1)
    out(dim - 1) = t;
  return out;
}

} // namespace mcf::net
