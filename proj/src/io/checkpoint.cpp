#include <fmt/core.h>
#include <fstream>
#include <mcf/core/error.h>
#include <mcf/io/checkpoint.h>
#include <mcf/io/config.h>
#include <mcf/io/dataset.h>

namespace mcf::io {

namespace {

json matrix_to_json(const Mat &m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.size(); i++)
    data.push_back(m.data()[i]);
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Mat matrix_from_json(const json &j, const std::string &name) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto &data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw Error(ErrorKind::Schema, "checkpoint tensor " + name + ": size mismatch");
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); i++)
    m.data()[i] = data[static_cast<std::size_t>(i)].get<double>();
  return m;
}

json train_config_to_json(const net::TrainConfig &c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"grad_clip", c.grad_clip},
          {"ot_align", c.ot_align},
          {"seed", c.seed},
          {"loss",
           {{"lattice", c.loss.lattice},
            {"rotation", c.loss.rotation},
            {"frac", c.loss.frac},
            {"t_clip", c.loss.t_clip}}}};
}

net::TrainConfig train_config_from_json(const json &j) {
  net::TrainConfig c;
  c.steps = j.at("steps").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.ot_align = j.at("ot_align").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto &l = j.at("loss");
  c.loss.lattice = l.at("lattice").get<double>();
  c.loss.rotation = l.at("rotation").get<double>();
  c.loss.frac = l.at("frac").get<double>();
  c.loss.t_clip = l.at("t_clip").get<double>();
  return c;
}

} // namespace

json prior_to_json(const flow::PriorSpec &p) {
  return {{"length_mean", p.length_mean},
          {"length_std", p.length_std},
          {"angle_low", p.angle_low},
          {"angle_high", p.angle_high},
          {"max_angle_tries", p.max_angle_tries},
          {"min_length", p.min_length}};
}

flow::PriorSpec prior_from_json(const json &p) {
  try {
    flow::PriorSpec out;
    out.length_mean = p.at("length_mean").get<std::array<double, 3>>();
    out.length_std = p.at("length_std").get<std::array<double, 3>>();
    out.angle_low = p.at("angle_low").get<double>();
    out.angle_high = p.at("angle_high").get<double>();
    out.max_angle_tries = p.at("max_angle_tries").get<int>();
    out.min_length = p.at("min_length").get<double>();
    out.validate();
    return out;
  } catch (const json::exception &e) {
    throw Error(ErrorKind::Schema, fmt::format("prior: {}", e.what()));
  }
}

void save_checkpoint(const std::string &path, const net::Model &model,
                     std::uint64_t init_seed,
                     const std::optional<TrainerSnapshot> &trainer) {
  json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "checkpoint";
  j["init_seed"] = init_seed;
  j["model_config"] = to_json(model.config());
  json params = json::object();
  for (const auto &name : model.params().names())
    params[name] = matrix_to_json(model.params().get(name).value());
  j["params"] = std::move(params);
  j["prior"] = prior_to_json(model.prior);
  j["descriptor_stats"] = {{"mean", model.scaler.mean}, {"scale", model.scaler.scale}};
  if (trainer) {
    json m = json::array(), v = json::array();
    for (const auto &x : trainer->adam.m)
      m.push_back(matrix_to_json(x));
    for (const auto &x : trainer->adam.v)
      v.push_back(matrix_to_json(x));
    j["trainer"] = {{"step", trainer->adam.step},
                    {"adam_m", std::move(m)},
                    {"adam_v", std::move(v)},
                    {"rng", trainer->rng_state},
                    {"config", train_config_to_json(trainer->config)}};
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out)
      throw Error(ErrorKind::Io, "cannot write checkpoint " + path);
    out << j.dump() << '\n';
    if (!out)
      throw Error(ErrorKind::Io, "write failed for " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error(ErrorKind::Io, "cannot move checkpoint into place at " + path);
}

Checkpoint load_checkpoint(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::Io, "cannot open checkpoint " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw Error(ErrorKind::Schema, fmt::format("checkpoint {}: {}", path, e.what()));
  }
  check_format_version(j, "checkpoint " + path);
  try {
    Checkpoint c;
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    c.model = std::make_unique<net::Model>(model_config_from_json(j.at("model_config")),
                                           c.init_seed);
    auto &store = c.model->params();
    const auto &params = j.at("params");
    if (params.size() != store.size())
      throw Error(ErrorKind::Schema, "checkpoint parameter count does not match the model");
    for (const auto &name : store.names()) {
      if (!params.contains(name))
        throw Error(ErrorKind::Schema, "checkpoint is missing parameter " + name);
      Mat value = matrix_from_json(params.at(name), name);
      ad::Tensor t = store.get(name);
      if (value.rows() != t.rows() || value.cols() != t.cols())
        throw Error(ErrorKind::Schema, "checkpoint parameter shape mismatch: " + name);
      t.mutable_value() = std::move(value);
    }
    c.model->prior = prior_from_json(j.at("prior"));
    const auto &d = j.at("descriptor_stats");
    c.model->scaler.mean = d.at("mean").get<descriptors::DescriptorVector>();
    c.model->scaler.scale = d.at("scale").get<descriptors::DescriptorVector>();
    if (j.contains("trainer")) {
      const auto &t = j.at("trainer");
      TrainerSnapshot s;
      s.adam.step = t.at("step").get<long>();
      for (const auto &x : t.at("adam_m"))
        s.adam.m.push_back(matrix_from_json(x, "adam_m"));
      for (const auto &x : t.at("adam_v"))
        s.adam.v.push_back(matrix_from_json(x, "adam_v"));
      s.rng_state = t.at("rng").get<std::string>();
      s.config = train_config_from_json(t.at("config"));
      c.trainer = std::move(s);
    }
    return c;
  } catch (const json::exception &e) {
    throw Error(ErrorKind::Schema, fmt::format("checkpoint {}: {}", path, e.what()));
  }
}

TrainerSnapshot snapshot(net::Trainer &trainer) {
  return {trainer.adam(), trainer.rng().state(), trainer.config()};
}

void restore(net::Trainer &trainer, const TrainerSnapshot &snap) {
  if (snap.adam.m.size() != trainer.adam().m.size())
    throw Error(ErrorKind::Schema, "optimiser state does not match the model");
  trainer.adam() = snap.adam;
  trainer.rng().set_state(snap.rng_state);
}

} // namespace mcf::io
