#pragma once
#include <map>
#include <mcf/ad/autodiff.h>
#include <mcf/core/rng.h>
#include <string>
#include <vector>

namespace mcf::net {

/// Named, ordered collection of trainable tensors.
class ParameterStore {
public:
  ad::Tensor add(const std::string &name, Mat init);
  ad::Tensor get(const std::string &name) const;
  bool contains(const std::string &name) const { return m_index.count(name) > 0; }

  const std::vector<std::string> &names() const { return m_names; }
  std::size_t size() const { return m_names.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

private:
  std::vector<std::string> m_names;
  std::vector<ad::Tensor> m_tensors;
  std::map<std::string, std::size_t> m_index;
};

struct Linear {
  ad::Tensor weight; // in x out
  ad::Tensor bias;   // 1 x out

  static Linear create(ParameterStore &store, const std::string &name, int in,
                       int out, Rng &rng, double gain = 1.0);
  ad::Tensor operator()(const ad::Tensor &x) const;
};

/// Linear layers with SiLU between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  static Mlp create(ParameterStore &store, const std::string &name,
                    const std::vector<int> &dims, Rng &rng,
                    double final_gain = 1.0);
  ad::Tensor operator()(const ad::Tensor &x) const;
  int in_dim() const { return static_cast<int>(layers.front().weight.rows()); }
  int out_dim() const { return static_cast<int>(layers.back().weight.cols()); }
};

/// Gaussian distance expansion with centres evenly spaced on [0, cutoff].
Vec rbf_embed(double d, double cutoff, int n_rbf);

/// (sin 2 pi k z, cos 2 pi k z) pairs for k = 1..K.
Vec fourier_embed(double z, int k);

/// Sinusoidal embedding of t with frequencies spaced geometrically in [1, 50].
Vec time_embed(double t, int dim);

} // namespace mcf::net
