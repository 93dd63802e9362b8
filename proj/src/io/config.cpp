#include <fmt/core.h>
#include <fstream>
#include <mcf/core/error.h>
#include <mcf/io/config.h>

namespace mcf::io {

using json = nlohmann::json;

namespace {

void merge_checked(json &base, const json &user, const std::string &path) {
  if (!user.is_object())
    throw Error(ErrorKind::Config, fmt::format("config key '{}' must be an object",
                                               path.empty() ? "<root>" : path));
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key()))
      throw Error(ErrorKind::Config, fmt::format("unknown config key '{}'", key));
    json &slot = base[it.key()];
    if (slot.is_object() && !slot.empty())
      merge_checked(slot, it.value(), key);
    else
      slot = it.value();
  }
}

template <typename T> T get(const json &j, const std::string &key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception &) {
    throw Error(ErrorKind::Config, fmt::format("config key '{}' has the wrong type", key));
  }
}

std::optional<double> optional_number(const json &j, const std::string &key) {
  if (j.at(key).is_null())
    return std::nullopt;
  return get<double>(j, key);
}

} // namespace

json to_json(const net::ModelConfig &cfg) {
  return {{"egnn",
           {{"n_layers", cfg.egnn.n_layers},
            {"hidden_dim", cfg.egnn.hidden_dim},
            {"cutoff", cfg.egnn.cutoff},
            {"n_rbf", cfg.egnn.n_rbf},
            {"vocabulary", cfg.egnn.vocabulary}}},
          {"mcnet",
           {{"n_layers", cfg.mcnet.n_layers},
            {"hidden_dim", cfg.mcnet.hidden_dim},
            {"fourier_k", cfg.mcnet.fourier_k},
            {"time_embed_dim", cfg.mcnet.time_embed_dim},
            {"chi_embed_dim", cfg.mcnet.chi_embed_dim},
            {"kappa_dim", cfg.mcnet.kappa_dim}}}};
}

net::ModelConfig model_config_from_json(const json &j) {
  net::ModelConfig cfg;
  const auto &e = j.at("egnn");
  cfg.egnn.n_layers = get<int>(e, "n_layers");
  cfg.egnn.hidden_dim = get<int>(e, "hidden_dim");
  cfg.egnn.cutoff = get<double>(e, "cutoff");
  cfg.egnn.n_rbf = get<int>(e, "n_rbf");
  cfg.egnn.vocabulary = get<std::vector<std::string>>(e, "vocabulary");
  const auto &m = j.at("mcnet");
  cfg.mcnet.n_layers = get<int>(m, "n_layers");
  cfg.mcnet.hidden_dim = get<int>(m, "hidden_dim");
  cfg.mcnet.fourier_k = get<int>(m, "fourier_k");
  cfg.mcnet.time_embed_dim = get<int>(m, "time_embed_dim");
  cfg.mcnet.chi_embed_dim = get<int>(m, "chi_embed_dim");
  cfg.mcnet.kappa_dim = get<int>(m, "kappa_dim");
  cfg.egnn.validate();
  cfg.mcnet.validate();
  return cfg;
}

json to_json(const RunConfig &c) {
  json j;
  j["seed"] = c.seed;
  j["paths"] = {{"dataset", c.paths.dataset},
                {"processed", c.paths.processed},
                {"output_dir", c.paths.output_dir},
                {"checkpoint", c.paths.checkpoint},
                {"descriptors", c.paths.descriptors},
                {"prior", c.paths.prior},
                {"targets", c.paths.targets},
                {"conformer", c.paths.conformer},
                {"predictions", c.paths.predictions},
                {"references", c.paths.references}};
  j["model"] = to_json(c.model);
  j["train"] = {{"steps", c.train.steps},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"adam_eps", c.train.adam_eps},
                {"grad_clip", c.train.grad_clip},
                {"ot_align", c.train.ot_align},
                {"checkpoint_every", c.train_extras.checkpoint_every},
                {"val_fraction", c.train_extras.val_fraction},
                {"val_batches", c.train_extras.val_batches},
                {"resume", c.train_extras.resume},
                {"loss",
                 {{"lattice", c.train.loss.lattice},
                  {"rotation", c.train.loss.rotation},
                  {"frac", c.train.loss.frac},
                  {"t_clip", c.train.loss.t_clip}}}};
  j["sampler"] = {{"n_steps", c.sampler.n_steps},
                  {"s_uf", c.sampler.s_uf},
                  {"s_ur", c.sampler.s_ur},
                  {"s_ul", c.sampler.s_ul},
                  {"t_clip", c.sampler.t_clip ? json(*c.sampler.t_clip) : json(nullptr)},
                  {"overlap_threshold", c.sampler.overlap_threshold
                                            ? json(*c.sampler.overlap_threshold)
                                            : json(nullptr)},
                  {"n_mc", c.sampler.n_mc},
                  {"max_resample", c.sampler.max_resample},
                  {"n_samples", c.sample.n_samples},
                  {"z", c.sample.z},
                  {"chi", c.sample.chi}};
  j["evaluation"] = {{"ltol", c.evaluation.ltol},
                     {"stol", c.evaluation.stol},
                     {"atol", c.evaluation.atol},
                     {"max_translations", c.evaluation.max_translations},
                     {"stol_grid", c.stol_grid},
                     {"sweep", c.sweep}};
  j["decompose"] = {{"bond_scale", c.decompose.radii.bond_scale},
                    {"bond_tolerance", c.decompose.radii.bond_tolerance},
                    {"canonical_rmsd_tol", c.decompose.canonical_rmsd_tol}};
  return j;
}

json default_config_json() { return to_json(RunConfig{}); }

RunConfig load_config(const json &user) {
  json doc = default_config_json();
  merge_checked(doc, user, "");
  RunConfig c;
  c.seed = get<std::uint64_t>(doc, "seed");
  const auto &p = doc.at("paths");
  c.paths.dataset = get<std::string>(p, "dataset");
  c.paths.processed = get<std::string>(p, "processed");
  c.paths.output_dir = get<std::string>(p, "output_dir");
  c.paths.checkpoint = get<std::string>(p, "checkpoint");
  c.paths.descriptors = get<std::string>(p, "descriptors");
  c.paths.prior = get<std::string>(p, "prior");
  c.paths.targets = get<std::string>(p, "targets");
  c.paths.conformer = get<std::string>(p, "conformer");
  c.paths.predictions = get<std::string>(p, "predictions");
  c.paths.references = get<std::string>(p, "references");
  c.model = model_config_from_json(doc.at("model"));
  const auto &t = doc.at("train");
  c.train.steps = get<int>(t, "steps");
  c.train.batch_size = get<int>(t, "batch_size");
  c.train.learning_rate = get<double>(t, "learning_rate");
  c.train.beta1 = get<double>(t, "beta1");
  c.train.beta2 = get<double>(t, "beta2");
  c.train.adam_eps = get<double>(t, "adam_eps");
  c.train.grad_clip = get<double>(t, "grad_clip");
  c.train.ot_align = get<bool>(t, "ot_align");
  c.train.seed = c.seed;
  c.train_extras.checkpoint_every = get<int>(t, "checkpoint_every");
  c.train_extras.val_fraction = get<double>(t, "val_fraction");
  c.train_extras.val_batches = get<int>(t, "val_batches");
  c.train_extras.resume = get<bool>(t, "resume");
  if (c.train_extras.val_fraction < 0.0 || c.train_extras.val_fraction >= 1.0)
    throw Error(ErrorKind::Config, "train.val_fraction must lie in [0, 1)");
  const auto &l = t.at("loss");
  c.train.loss.lattice = get<double>(l, "lattice");
  c.train.loss.rotation = get<double>(l, "rotation");
  c.train.loss.frac = get<double>(l, "frac");
  c.train.loss.t_clip = get<double>(l, "t_clip");
  c.train.validate();
  const auto &s = doc.at("sampler");
  c.sampler.n_steps = get<int>(s, "n_steps");
  c.sampler.s_uf = get<double>(s, "s_uf");
  c.sampler.s_ur = get<double>(s, "s_ur");
  c.sampler.s_ul = get<double>(s, "s_ul");
  c.sampler.t_clip = optional_number(s, "t_clip");
  c.sampler.overlap_threshold = optional_number(s, "overlap_threshold");
  c.sampler.n_mc = get<int>(s, "n_mc");
  c.sampler.max_resample = get<int>(s, "max_resample");
  c.sampler.validate();
  c.sample.n_samples = get<int>(s, "n_samples");
  c.sample.z = get<int>(s, "z");
  c.sample.chi = get<std::string>(s, "chi");
  if (c.sample.n_samples < 0 || c.sample.z < 0)
    throw Error(ErrorKind::Config, "sampler.n_samples and sampler.z must be >= 0");
  const auto &e = doc.at("evaluation");
  c.evaluation.ltol = get<double>(e, "ltol");
  c.evaluation.stol = get<double>(e, "stol");
  c.evaluation.atol = get<double>(e, "atol");
  c.evaluation.max_translations = get<int>(e, "max_translations");
  c.stol_grid = get<std::vector<double>>(e, "stol_grid");
  c.sweep = get<bool>(e, "sweep");
  c.evaluation.validate();
  const auto &d = doc.at("decompose");
  c.decompose.radii.bond_scale = get<double>(d, "bond_scale");
  c.decompose.radii.bond_tolerance = get<double>(d, "bond_tolerance");
  c.decompose.canonical_rmsd_tol = get<double>(d, "canonical_rmsd_tol");
  return c;
}

RunConfig load_config_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::Io, "cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw Error(ErrorKind::Config, fmt::format("{}: {}", path, e.what()));
  }
  return load_config(j);
}

} // namespace mcf::io
