#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fmt/core.h>
#include <fmt/ostream.h>
#include <fstream>
#include <map>
#include <mcf/cli.h>
#include <mcf/core/error.h>
#include <mcf/descriptors.h>
#include <mcf/eval/matcher.h>
#include <mcf/io/checkpoint.h>
#include <mcf/io/config.h>
#include <mcf/io/xyz.h>
#include <mcf/manifold.h>
#include <mcf/net/train.h>
#include <mcf/sampler.h>
#include <mcf/synthetic.h>
#include <optional>
#include <ostream>
#include <set>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

namespace mcf::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kResidualLimit = 1e-4; // Angstrom

std::shared_ptr<spdlog::logger> make_logger(std::ostream &err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto log = std::make_shared<spdlog::logger>("mcf", sink);
  log->set_pattern("[%l] %v");
  spdlog::level::level_enum level = spdlog::level::info;
  if (const char *env = std::getenv("MCF_LOG_LEVEL"))
    level = spdlog::level::from_str(env);
  log->set_level(level);
  return log;
}

struct Context {
  io::RunConfig cfg;
  json effective;
  std::shared_ptr<spdlog::logger> log;
  std::ostream *out;
};

/// Flag values keyed by JSON pointer into the config document.
class Overrides {
public:
  template <typename T> void add(CLI::App *cmd, const std::string &flag,
                                 const std::string &pointer, const std::string &help) {
    auto slot = std::make_shared<std::optional<T>>();
    cmd->add_option_function<T>(flag, [slot](const T &v) { *slot = v; }, help);
    m_setters.push_back([slot, pointer](json &doc) {
      if (*slot)
        doc[json::json_pointer(pointer)] = **slot;
    });
  }
  void add_flag(CLI::App *cmd, const std::string &flag, const std::string &pointer,
                const std::string &help) {
    auto slot = std::make_shared<bool>(false);
    cmd->add_flag_callback(flag, [slot] { *slot = true; }, help);
    m_setters.push_back([slot, pointer](json &doc) {
      if (*slot)
        doc[json::json_pointer(pointer)] = true;
    });
  }
  void add_raw(std::function<void(json &)> f) { m_setters.push_back(std::move(f)); }
  void apply(json &doc) const {
    for (const auto &f : m_setters)
      f(doc);
  }

private:
  std::vector<std::function<void(json &)>> m_setters;
};

std::string require_path(const std::string &value, const std::string &key,
                         const std::string &flag) {
  if (value.empty())
    throw Error(ErrorKind::Config,
                fmt::format("missing required setting '{}' (or {})", key, flag));
  return value;
}

fs::path output_dir(const Context &ctx) {
  fs::path dir(ctx.cfg.paths.output_dir.empty() ? "." : ctx.cfg.paths.output_dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out)
    throw Error(ErrorKind::Io, "write failed for " + path.string());
}

void write_effective_config(const Context &ctx, const std::string &command) {
  json doc = ctx.effective;
  doc["format_version"] = io::kFormatVersion;
  write_text(output_dir(ctx) / (command + ".config.json"), doc.dump(2) + "\n");
}

bool is_xyz(const std::string &path) {
  const auto ext = fs::path(path).extension().string();
  return ext == ".xyz" || ext == ".extxyz";
}

/// Structures from dataset JSONL, processed JSONL or extended XYZ.
io::ReadResult<io::DatasetRecord> load_structures(const std::string &path) {
  io::ReadResult<io::DatasetRecord> out;
  if (is_xyz(path)) {
    for (auto &s : io::read_extxyz(path))
      out.records.push_back({std::move(s), std::nullopt, ""});
    return out;
  }
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::Io, "cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    std::string id;
    try {
      const json j = json::parse(line);
      if (j.is_object() && j.contains("id") && j.at("id").is_string())
        id = j.at("id").get<std::string>();
      if (j.is_object() && j.value("kind", "") == "processed") {
        auto p = io::processed_record_from_json(j);
        auto s = crystal::reconstruct(p.crystal);
        s.id = p.crystal.id;
        out.records.push_back({std::move(s), p.descriptors, p.split});
      } else {
        out.records.push_back(io::dataset_record_from_json(j));
      }
    } catch (const json::exception &e) {
      out.quarantined.push_back({lineno, id, std::string(error_tag(ErrorKind::Schema)),
                                 fmt::format("line {}: {}", lineno, e.what())});
    } catch (const Error &e) {
      out.quarantined.push_back(
          {lineno, id, std::string(e.tag()), fmt::format("line {}: {}", lineno, e.what())});
    }
  }
  return out;
}

json quarantine_json(const io::Quarantined &q) {
  return {{"format_version", io::kFormatVersion},
          {"line", q.line},
          {"id", q.id},
          {"reason", q.reason},
          {"message", q.message}};
}

std::vector<net::CrystalExample> to_examples(const std::vector<io::ProcessedRecord> &records) {
  std::vector<net::CrystalExample> out;
  for (const auto &r : records)
    out.push_back(net::make_example(r.crystal, r.descriptors));
  return out;
}

struct Splits {
  std::vector<io::ProcessedRecord> train, val;
};

Splits split_records(std::vector<io::ProcessedRecord> records, const io::RunConfig &cfg) {
  split_by_formula(records, cfg.train_extras.val_fraction, cfg.seed);
  Splits s;
  for (auto &r : records) {
    if (r.split == "val")
      s.val.push_back(std::move(r));
    else if (r.split != "test")
      s.train.push_back(std::move(r));
  }
  return s;
}

std::vector<io::ProcessedRecord> read_processed_checked(const Context &ctx,
                                                        const std::string &path,
                                                        bool &partial) {
  auto res = io::read_processed(path);
  for (const auto &q : res.quarantined) {
    ctx.log->warn("{}: skipped record '{}' [{}]: {}", path, q.id, q.reason, q.message);
    partial = true;
  }
  if (res.records.empty())
    throw Error(ErrorKind::InvalidInput, path + ": no usable processed records");
  return std::move(res.records);
}

// ---------------------------------------------------------------- preprocess

int cmd_preprocess(Context &ctx) {
  const auto &cfg = ctx.cfg;
  const std::string input = require_path(cfg.paths.dataset, "paths.dataset", "--input");
  const fs::path out_path = cfg.paths.processed.empty()
                                ? output_dir(ctx) / "processed.jsonl"
                                : fs::path(cfg.paths.processed);
  if (out_path.has_parent_path())
    fs::create_directories(out_path.parent_path());
  std::map<std::string, descriptors::DescriptorVector> sidecar;
  if (!cfg.paths.descriptors.empty())
    sidecar = io::read_descriptor_sidecar(cfg.paths.descriptors);

  auto raw = load_structures(input);
  std::vector<io::Quarantined> quarantined = raw.quarantined;
  std::vector<json> processed, diagnostics;
  for (std::size_t i = 0; i < raw.records.size(); i++) {
    const auto &rec = raw.records[i];
    try {
      io::ProcessedRecord p;
      p.crystal = crystal::decompose(rec.structure, cfg.decompose);
      p.roundtrip_residual = crystal::roundtrip_residual(rec.structure, p.crystal);
      if (!(p.roundtrip_residual <= kResidualLimit))
        throw Error(ErrorKind::CanonicalizationFailure,
                    fmt::format("roundtrip residual {:.3g} A exceeds {:.0e} A",
                                p.roundtrip_residual, kResidualLimit));
      p.descriptors = rec.descriptors;
      if (auto it = sidecar.find(rec.structure.id); it != sidecar.end())
        p.descriptors = it->second;
      p.split = rec.split;
      processed.push_back(io::to_json(p));
      diagnostics.push_back({{"id", p.crystal.id},
                             {"z", p.crystal.z()},
                             {"roundtrip_residual", p.roundtrip_residual}});
    } catch (const Error &e) {
      quarantined.push_back({i + 1, rec.structure.id, std::string(e.tag()), e.what()});
    }
  }
  for (const auto &q : quarantined)
    ctx.log->warn("quarantined '{}' [{}]: {}", q.id, q.reason, q.message);

  io::write_jsonl(out_path.string(), processed);
  io::write_schema(out_path.string(), "processed");
  std::vector<json> qj;
  for (const auto &q : quarantined)
    qj.push_back(quarantine_json(q));
  io::write_jsonl(out_path.string() + ".quarantine.jsonl", qj);
  const json report = {{"format_version", io::kFormatVersion},
                       {"input", input},
                       {"n_input", processed.size() + quarantined.size()},
                       {"n_processed", processed.size()},
                       {"n_quarantined", quarantined.size()},
                       {"structures", diagnostics}};
  write_text(out_path.string() + ".report.json", report.dump(2) + "\n");
  write_effective_config(ctx, "preprocess");
  fmt::print(*ctx.out, "processed {} structures, quarantined {} -> {}\n", processed.size(),
             quarantined.size(), out_path.string());
  if (processed.empty() && !quarantined.empty())
    return kExitFatal;
  return quarantined.empty() ? kExitOk : kExitPartial;
}

// ----------------------------------------------------------------- fit-prior

int cmd_fit_prior(Context &ctx) {
  const auto &cfg = ctx.cfg;
  const std::string path = require_path(cfg.paths.processed, "paths.processed", "--processed");
  bool partial = false;
  const Splits s = split_records(read_processed_checked(ctx, path, partial), cfg);
  std::vector<Lattice> lattices;
  for (const auto &r : s.train)
    lattices.push_back(r.crystal.lattice);
  const flow::PriorSpec prior = flow::fit_lattice_prior(lattices);
  json doc = {{"format_version", io::kFormatVersion},
              {"kind", "prior"},
              {"n_structures", lattices.size()},
              {"prior", io::prior_to_json(prior)}};
  const fs::path out = output_dir(ctx) / "prior.json";
  write_text(out, doc.dump(2) + "\n");
  write_effective_config(ctx, "fit-prior");
  fmt::print(*ctx.out, "lattice prior from {} structures: mean ({:.4f}, {:.4f}, {:.4f}) "
                       "std ({:.4f}, {:.4f}, {:.4f}) -> {}\n",
             lattices.size(), prior.length_mean[0], prior.length_mean[1],
             prior.length_mean[2], prior.length_std[0], prior.length_std[1],
             prior.length_std[2], out.string());
  return partial ? kExitPartial : kExitOk;
}

flow::PriorSpec read_prior_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::Io, "cannot open prior " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw Error(ErrorKind::Schema, fmt::format("{}: {}", path, e.what()));
  }
  io::check_format_version(j, "prior " + path);
  return io::prior_from_json(j.at("prior"));
}

// --------------------------------------------------------------------- train

std::string csv_number(double x) { return fmt::format("{:.17g}", x); }

int cmd_train(Context &ctx) {
  const auto &cfg = ctx.cfg;
  const std::string path = require_path(cfg.paths.processed, "paths.processed", "--processed");
  bool partial = false;
  const Splits splits = split_records(read_processed_checked(ctx, path, partial), cfg);
  if (splits.train.empty())
    throw Error(ErrorKind::InvalidInput, "no training records after the split");
  const auto train = to_examples(splits.train);
  const auto val = to_examples(splits.val);
  ctx.log->info("training on {} crystals, validating on {}", train.size(), val.size());

  std::unique_ptr<net::Model> model;
  std::optional<io::TrainerSnapshot> resume;
  std::uint64_t init_seed = cfg.seed;
  net::TrainConfig tcfg = cfg.train;
  if (cfg.train_extras.resume) {
    const std::string ck =
        require_path(cfg.paths.checkpoint, "paths.checkpoint", "--resume");
    auto loaded = io::load_checkpoint(ck);
    if (!loaded.trainer)
      throw Error(ErrorKind::Schema, ck + " carries no optimiser state to resume from");
    model = std::move(loaded.model);
    init_seed = loaded.init_seed;
    resume = std::move(loaded.trainer);
    tcfg = resume->config;
    tcfg.steps = cfg.train.steps;
    ctx.log->info("resuming from {} at step {}", ck, resume->adam.step);
  } else {
    model = std::make_unique<net::Model>(cfg.model, cfg.seed);
    net::fit_statistics(*model, train);
    if (!cfg.paths.prior.empty())
      model->prior = read_prior_file(cfg.paths.prior);
  }

  net::Trainer trainer(*model, train, tcfg);
  if (resume)
    io::restore(trainer, *resume);

  const fs::path dir = output_dir(ctx);
  const fs::path loss_path = dir / "loss.csv";
  const fs::path val_path = dir / "val.csv";
  const bool append = resume && fs::exists(loss_path);
  std::ofstream loss_csv(loss_path, append ? std::ios::app : std::ios::trunc);
  std::ofstream val_csv(val_path, append ? std::ios::app : std::ios::trunc);
  if (!loss_csv || !val_csv)
    throw Error(ErrorKind::Io, "cannot write loss traces in " + dir.string());
  if (!append) {
    loss_csv << "step,loss,loss_L,loss_R,loss_F\n";
    val_csv << "step,val_loss\n";
  }

  const long epoch = std::max<long>(
      1, static_cast<long>((train.size() + tcfg.batch_size - 1) / tcfg.batch_size));
  const auto save = [&](const fs::path &p) {
    io::save_checkpoint(p.string(), *model, init_seed, io::snapshot(trainer));
  };
  while (trainer.adam().step < tcfg.steps) {
    const net::StepRecord r = trainer.step();
    loss_csv << r.step << ',' << csv_number(r.loss) << ',' << csv_number(r.lattice) << ','
             << csv_number(r.rotation) << ',' << csv_number(r.frac) << '\n';
    if (r.step % epoch == 0 || r.step == tcfg.steps) {
      if (!val.empty()) {
        const double v = trainer.evaluate(val, cfg.seed, cfg.train_extras.val_batches);
        val_csv << r.step << ',' << csv_number(v) << '\n';
        ctx.log->info("step {} loss {:.5f} val {:.5f}", r.step, r.loss, v);
      } else {
        ctx.log->info("step {} loss {:.5f}", r.step, r.loss);
      }
    }
    if (cfg.train_extras.checkpoint_every > 0 &&
        r.step % cfg.train_extras.checkpoint_every == 0)
      save(dir / fmt::format("checkpoint_step{}.json", r.step));
  }
  loss_csv.flush();
  val_csv.flush();
  const fs::path final_path = dir / "checkpoint.json";
  save(final_path);
  write_effective_config(ctx, "train");
  fmt::print(*ctx.out, "trained to step {} -> {}\n", trainer.adam().step, final_path.string());
  return partial ? kExitPartial : kExitOk;
}

// -------------------------------------------------------------------- sample

struct SampleTarget {
  std::string id;
  std::vector<std::string> species;
  MatN3 coords;
  int z{1};
  std::vector<int> chi;
};

std::vector<SampleTarget> sample_targets(const Context &ctx, bool &partial) {
  const auto &cfg = ctx.cfg;
  const auto &opt = cfg.sample;
  std::vector<SampleTarget> out;
  if (!cfg.paths.targets.empty()) {
    auto res = load_structures(cfg.paths.targets);
    for (const auto &q : res.quarantined) {
      ctx.log->warn("skipped target '{}' [{}]: {}", q.id, q.reason, q.message);
      partial = true;
    }
    for (const auto &rec : res.records) {
      try {
        const auto c = crystal::decompose(rec.structure, cfg.decompose);
        std::set<int> types;
        for (const auto &b : c.blocks)
          types.insert(b.type_id);
        if (types.size() != 1)
          throw Error(ErrorKind::InvalidInput,
                      "targets with more than one molecule type are not supported");
        SampleTarget t;
        t.id = rec.structure.id;
        t.species = c.blocks.front().species;
        t.coords = c.blocks.front().internal;
        t.z = opt.z > 0 ? opt.z : c.z();
        if (!opt.chi.empty())
          t.chi = sampler::chi_pattern(opt.chi, t.z);
        else if (t.z == c.z())
          t.chi = c.chis();
        else
          t.chi = sampler::chi_pattern("same", t.z);
        out.push_back(std::move(t));
      } catch (const Error &e) {
        ctx.log->warn("skipped target '{}' [{}]: {}", rec.structure.id, e.tag(), e.what());
        partial = true;
      }
    }
    return out;
  }
  const std::string path = require_path(cfg.paths.conformer, "paths.conformer",
                                        "--conformer or --targets");
  if (opt.z < 1)
    throw Error(ErrorKind::Config, "sampler.z (--z) must be set when sampling a conformer");
  const auto mol = io::read_xyz_molecule(path);
  SampleTarget t;
  t.id = mol.id.empty() || mol.id.rfind(path, 0) == 0 ? fs::path(path).stem().string()
                                                       : mol.id;
  t.species = mol.species;
  t.coords = mol.coords;
  t.z = opt.z;
  t.chi = sampler::chi_pattern(opt.chi.empty() ? "same" : opt.chi, t.z);
  out.push_back(std::move(t));
  return out;
}

int cmd_sample(Context &ctx) {
  const auto &cfg = ctx.cfg;
  const std::string ck = require_path(cfg.paths.checkpoint, "paths.checkpoint", "--checkpoint");
  const auto loaded = io::load_checkpoint(ck);
  bool partial = false;
  const auto targets = sample_targets(ctx, partial);

  std::vector<json> structures, metadata;
  for (std::size_t ti = 0; ti < targets.size(); ti++) {
    const auto &t = targets[ti];
    sampler::GenerationRequest req;
    req.species = t.species;
    req.coords = t.coords;
    req.z = t.z;
    req.chi_pattern = t.chi;
    req.n_samples = cfg.sample.n_samples;
    req.seed = cfg.seed + ti;
    req.id = t.id;
    const auto res = sampler::generate(*loaded.model, req, cfg.sampler);
    for (const auto &w : res.warnings) {
      ctx.log->warn("target '{}': {}", t.id, w);
      partial = true;
    }
    for (std::size_t k = 0; k < res.samples.size(); k++) {
      const auto &s = res.samples[k];
      io::DatasetRecord rec{s.structure, std::nullopt, ""};
      rec.structure.id = t.id;
      json j = io::to_json(rec);
      j["sample"] = k;
      structures.push_back(std::move(j));
      metadata.push_back(
          {{"format_version", io::kFormatVersion},
           {"id", t.id},
           {"sample", k},
           {"seed", req.seed},
           {"stream", k},
           {"steps", cfg.sampler.n_steps},
           {"s_uf", cfg.sampler.s_uf},
           {"s_ur", cfg.sampler.s_ur},
           {"s_ul", cfg.sampler.s_ul},
           {"z", t.z},
           {"chi_pattern", t.chi},
           {"overlap_threshold", cfg.sampler.overlap_threshold
                                     ? json(*cfg.sampler.overlap_threshold)
                                     : json(nullptr)},
           {"max_overlap", s.max_overlap},
           {"resamples", s.resamples}});
    }
  }
  const fs::path dir = output_dir(ctx);
  io::write_jsonl((dir / "samples.jsonl").string(), structures);
  io::write_schema((dir / "samples.jsonl").string(), "structures");
  io::write_jsonl((dir / "samples.meta.jsonl").string(), metadata);
  write_effective_config(ctx, "sample");
  fmt::print(*ctx.out, "wrote {} samples for {} targets -> {}\n", structures.size(),
             targets.size(), (dir / "samples.jsonl").string());
  if (targets.empty())
    return kExitFatal;
  return partial ? kExitPartial : kExitOk;
}

// ------------------------------------------------------------------ evaluate

int cmd_evaluate(Context &ctx) {
  const auto &cfg = ctx.cfg;
  const std::string pred_path =
      require_path(cfg.paths.predictions, "paths.predictions", "--predictions");
  const std::string ref_path =
      require_path(cfg.paths.references, "paths.references", "--references");
  bool partial = false;
  auto preds = load_structures(pred_path);
  auto refs = load_structures(ref_path);
  for (const auto &q : preds.quarantined) {
    ctx.log->warn("{}: skipped '{}' [{}]: {}", pred_path, q.id, q.reason, q.message);
    partial = true;
  }
  for (const auto &q : refs.quarantined) {
    ctx.log->warn("{}: skipped '{}' [{}]: {}", ref_path, q.id, q.reason, q.message);
    partial = true;
  }

  std::vector<crystal::AtomicStructure> references;
  std::map<std::string, const crystal::AtomicStructure *> by_id;
  for (const auto &r : refs.records)
    references.push_back(r.structure);
  for (const auto &r : references)
    by_id[r.id] = &r;
  std::vector<eval::TargetPredictions> grouped;
  std::map<std::string, std::size_t> slot;
  for (const auto &p : preds.records) {
    auto [it, fresh] = slot.emplace(p.structure.id, grouped.size());
    if (fresh)
      grouped.push_back({p.structure.id, {}});
    grouped[it->second].samples.push_back(p.structure);
  }
  // references without any prediction count as unmatched targets
  for (const auto &r : references)
    if (!slot.count(r.id)) {
      slot.emplace(r.id, grouped.size());
      grouped.push_back({r.id, {}});
    }

  const auto rate = eval::match_rate(grouped, references, cfg.evaluation);
  std::vector<Lattice> vp, vr;
  for (const auto &g : grouped)
    for (const auto &s : g.samples) {
      vp.push_back(s.lattice);
      vr.push_back(by_id.at(g.id)->lattice);
    }
  const auto rmad = eval::volume_rmad(vp, vr);

  const json criteria = {{"ltol", cfg.evaluation.ltol},
                         {"stol", cfg.evaluation.stol},
                         {"atol", cfg.evaluation.atol},
                         {"max_translations", cfg.evaluation.max_translations},
                         {"volume_scaling", false}};
  std::vector<json> records;
  for (const auto &t : rate.targets)
    records.push_back({{"format_version", io::kFormatVersion},
                       {"record", "target"},
                       {"id", t.id},
                       {"matched", t.matched},
                       {"best_rms", std::isfinite(t.best_rms) ? json(t.best_rms) : json(nullptr)},
                       {"n_samples", t.n_samples},
                       {"first_match", t.first_match}});
  records.push_back({{"format_version", io::kFormatVersion},
                     {"record", "summary"},
                     {"n_targets", rate.targets.size()},
                     {"match_rate", rate.rate},
                     {"volume_rmad_percent", rmad.mean_percent},
                     {"criteria", criteria}});
  const fs::path dir = output_dir(ctx);
  io::write_jsonl((dir / "evaluation.jsonl").string(), records);
  io::write_schema((dir / "evaluation.jsonl").string(), "evaluation");
  fmt::print(*ctx.out, "match rate {:.4f} ({} targets) at stol {}, volume RMAD {:.3f}%\n",
             rate.rate, rate.targets.size(), cfg.evaluation.stol, rmad.mean_percent);

  if (cfg.sweep) {
    std::string csv = "stol,match_rate\n";
    for (double stol : cfg.stol_grid) {
      auto crit = cfg.evaluation;
      crit.stol = stol;
      const double r = eval::match_rate(grouped, references, crit).rate;
      csv += fmt::format("{},{}\n", stol, r);
      fmt::print(*ctx.out, "stol {:.2f}: match rate {:.4f}\n", stol, r);
    }
    write_text(dir / "stol_sweep.csv", csv);
  }
  write_effective_config(ctx, "evaluate");
  return partial ? kExitPartial : kExitOk;
}

// ------------------------------------------------------------------- inspect

bool is_orthonormal(const Rotation &r) {
  return (r.transpose() * r - Mat3::Identity()).norm() < 1e-8 && r.determinant() > 0.0;
}

void print_crystal_summary(std::ostream &out, const crystal::MolecularCrystal &c,
                           std::optional<double> residual) {
  const auto p = manifold::lattice_params(c.lattice);
  const auto chis = c.chis();
  const auto n1 = std::count(chis.begin(), chis.end(), 1);
  fmt::print(out, "  Z: {}\n", c.z());
  fmt::print(out, "  lattice: a={:.4f} b={:.4f} c={:.4f} alpha={:.3f} beta={:.3f} gamma={:.3f}\n",
             p.a, p.b, p.c, p.alpha, p.beta, p.gamma);
  std::string chi_list;
  for (int x : chis)
    chi_list += (chi_list.empty() ? "" : ",") + std::to_string(x);
  fmt::print(out, "  chi: [{}] (chi0={}, chi1={})\n", chi_list,
             static_cast<long>(chis.size()) - n1, n1);
  if (!c.blocks.empty()) {
    const auto mol = net::make_molecule_input(c.blocks.front().species,
                                              c.blocks.front().internal);
    fmt::print(out, "  formula: {}\n", hill_formula(c.blocks.front().species));
    fmt::print(out, "  descriptors:");
    for (int k = 0; k < descriptors::kNumDescriptors; k++)
      fmt::print(out, " {}={:.4g}", descriptors::slot_names()[k], mol.descriptors[k]);
    fmt::print(out, "\n");
  }
  bool wrapped = true, orthonormal = true;
  for (const auto &b : c.blocks) {
    wrapped = wrapped && b.centroid_frac.minCoeff() >= 0.0 && b.centroid_frac.maxCoeff() < 1.0;
    orthonormal = orthonormal && is_orthonormal(b.rotation);
  }
  const bool det_ok = c.lattice.determinant() > 0.0;
  fmt::print(out, "  checks: centroids_wrapped={} rotations_orthonormal={} det_positive={}",
             wrapped, orthonormal, det_ok);
  bool residual_ok = true;
  if (residual) {
    residual_ok = *residual <= kResidualLimit;
    fmt::print(out, " roundtrip_residual={:.3g}", *residual);
  }
  fmt::print(out, "\n  valid: {}\n", wrapped && orthonormal && det_ok && residual_ok);
}

int cmd_inspect(Context &ctx, const std::string &path) {
  std::ostream &out = *ctx.out;
  int n_valid = 0, n_invalid = 0;
  const auto summarize_structure = [&](const crystal::AtomicStructure &s) {
    fmt::print(out, "record {}\n", s.id);
    try {
      const auto c = crystal::decompose(s, ctx.cfg.decompose);
      const double res = crystal::roundtrip_residual(s, c);
      print_crystal_summary(out, c, res);
      res <= kResidualLimit ? n_valid++ : n_invalid++;
    } catch (const Error &e) {
      fmt::print(out, "  error [{}]: {}\n  valid: false\n", e.tag(), e.what());
      n_invalid++;
    }
  };
  if (is_xyz(path)) {
    for (const auto &s : io::read_extxyz(path))
      summarize_structure(s);
  } else {
    std::ifstream in(path);
    if (!in)
      throw Error(ErrorKind::Io, "cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      lineno++;
      if (line.find_first_not_of(" \t\r") == std::string::npos)
        continue;
      try {
        const json j = json::parse(line);
        if (j.is_object() && j.value("kind", "") == "processed") {
          const auto p = io::processed_record_from_json(j);
          fmt::print(out, "record {}\n", p.crystal.id);
          print_crystal_summary(out, p.crystal, std::nullopt);
          bool ok = p.crystal.lattice.determinant() > 0.0;
          for (const auto &b : p.crystal.blocks)
            ok = ok && is_orthonormal(b.rotation) && b.centroid_frac.minCoeff() >= 0.0 &&
                 b.centroid_frac.maxCoeff() < 1.0;
          ok ? n_valid++ : n_invalid++;
        } else {
          summarize_structure(io::dataset_record_from_json(j).structure);
        }
      } catch (const json::exception &e) {
        fmt::print(out, "line {}: error [{}]: {}\n  valid: false\n", lineno,
                   error_tag(ErrorKind::Schema), e.what());
        n_invalid++;
      } catch (const Error &e) {
        fmt::print(out, "line {}: error [{}]: {}\n  valid: false\n", lineno, e.tag(),
                   e.what());
        n_invalid++;
      }
    }
  }
  if (n_valid == 0 && n_invalid > 0)
    return kExitFatal;
  return n_invalid > 0 ? kExitPartial : kExitOk;
}

// --------------------------------------------------------------------- synth

int cmd_synth(Context &ctx, int n, int max_z, const std::string &molecule, int z,
              const std::string &output) {
  std::vector<crystal::AtomicStructure> structures;
  if (molecule.empty()) {
    structures = synthetic::corpus(n, ctx.cfg.seed, max_z);
  } else {
    const auto &tpl = synthetic::molecule(molecule);
    for (int i = 0; i < n; i++) {
      Rng rng = Rng::stream(ctx.cfg.seed, static_cast<std::uint64_t>(i));
      synthetic::CrystalOptions opts;
      opts.z = z;
      structures.push_back(synthetic::random_crystal(tpl, opts, rng,
                                                     fmt::format("{}-{}", molecule, i)));
    }
  }
  std::vector<json> records;
  for (auto &s : structures)
    records.push_back(io::to_json(io::DatasetRecord{std::move(s), std::nullopt, ""}));
  const fs::path out_path = output.empty() ? output_dir(ctx) / "synthetic.jsonl" : fs::path(output);
  if (out_path.has_parent_path())
    fs::create_directories(out_path.parent_path());
  io::write_jsonl(out_path.string(), records);
  io::write_schema(out_path.string(), "structures");
  fmt::print(*ctx.out, "wrote {} synthetic structures -> {}\n", records.size(),
             out_path.string());
  return kExitOk;
}

json read_config_document(const std::string &path) {
  if (path.empty())
    return json::object();
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::Io, "cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw Error(ErrorKind::Config, fmt::format("{}: {}", path, e.what()));
  }
  if (j.is_object())
    j.erase("format_version");
  return j;
}

} // namespace

std::string hill_formula(const std::vector<std::string> &species) {
  std::map<std::string, int> counts;
  for (const auto &s : species)
    counts[s]++;
  std::string out;
  const auto emit = [&](const std::string &el) {
    const int c = counts[el];
    out += c == 1 ? el : el + std::to_string(c);
    counts.erase(el);
  };
  if (counts.count("C")) {
    emit("C");
    if (counts.count("H"))
      emit("H");
  }
  while (!counts.empty())
    emit(counts.begin()->first);
  return out;
}

std::string crystal_formula(const crystal::MolecularCrystal &c) {
  std::set<std::string> formulas;
  for (const auto &b : c.blocks)
    formulas.insert(hill_formula(b.species));
  std::string out;
  for (const auto &f : formulas)
    out += (out.empty() ? "" : ".") + f;
  return out;
}

void split_by_formula(std::vector<io::ProcessedRecord> &records, double val_fraction,
                      std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> groups;
  std::size_t untagged = 0;
  for (std::size_t i = 0; i < records.size(); i++)
    if (records[i].split.empty()) {
      groups[crystal_formula(records[i].crystal)].push_back(i);
      untagged++;
    }
  std::vector<const std::vector<std::size_t> *> order;
  for (const auto &[formula, idx] : groups)
    order.push_back(&idx);
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; i--)
    std::swap(order[i - 1], order[rng.index(i)]);
  const auto target = static_cast<std::size_t>(
      std::llround(val_fraction * static_cast<double>(untagged)));
  std::size_t in_val = 0;
  for (std::size_t g = 0; g < order.size(); g++) {
    // keep at least one formula group for training
    const bool to_val = in_val < target && g + 1 < order.size();
    for (std::size_t i : *order[g])
      records[i].split = to_val ? "val" : "train";
    if (to_val)
      in_val += order[g]->size();
  }
}

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  Context ctx;
  ctx.out = &out;
  ctx.log = make_logger(err);

  CLI::App app{"Molecular crystal flow matching toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (defaults for unset keys)");
  Overrides ov;

  const auto common = [&](CLI::App *cmd) {
    ov.add<std::uint64_t>(cmd, "--seed", "/seed", "random seed");
    ov.add<std::string>(cmd, "--output-dir", "/paths/output_dir", "output directory");
  };

  auto *pre = app.add_subcommand("preprocess", "decompose raw structures into rigid blocks");
  common(pre);
  ov.add<std::string>(pre, "--input", "/paths/dataset", "raw structures (JSONL or XYZ)");
  ov.add<std::string>(pre, "--output,--processed", "/paths/processed", "processed JSONL");
  ov.add<std::string>(pre, "--descriptors", "/paths/descriptors", "descriptor sidecar");

  auto *fit = app.add_subcommand("fit-prior", "fit the lattice prior on the training split");
  common(fit);
  ov.add<std::string>(fit, "--processed", "/paths/processed", "processed JSONL");

  auto *train = app.add_subcommand("train", "train the flow model");
  common(train);
  ov.add<std::string>(train, "--processed", "/paths/processed", "processed JSONL");
  ov.add<std::string>(train, "--prior", "/paths/prior", "fitted prior file");
  ov.add<int>(train, "--steps", "/train/steps", "total optimiser steps");
  ov.add<int>(train, "--batch-size", "/train/batch_size", "crystals per batch");
  ov.add<double>(train, "--lr", "/train/learning_rate", "Adam learning rate");
  ov.add<int>(train, "--checkpoint-every", "/train/checkpoint_every", "steps between checkpoints");
  {
    auto slot = std::make_shared<std::string>();
    train->add_option("--resume", *slot, "continue from this checkpoint");
    ov.add_raw([slot](json &doc) {
      if (!slot->empty()) {
        doc["paths"]["checkpoint"] = *slot;
        doc["train"]["resume"] = true;
      }
    });
  }

  auto *sample = app.add_subcommand("sample", "generate crystals from a checkpoint");
  common(sample);
  ov.add<std::string>(sample, "--checkpoint", "/paths/checkpoint", "model checkpoint");
  ov.add<std::string>(sample, "--targets", "/paths/targets", "structures defining molecule, Z, chi");
  ov.add<std::string>(sample, "--conformer", "/paths/conformer", "XYZ molecule");
  ov.add<int>(sample, "--n-samples", "/sampler/n_samples", "samples per target");
  ov.add<int>(sample, "--z", "/sampler/z", "molecules per cell");
  ov.add<std::string>(sample, "--chi", "/sampler/chi", "same, half or a 0/1 string");
  ov.add<int>(sample, "--steps", "/sampler/n_steps", "Euler steps");
  ov.add<double>(sample, "--s-uf", "/sampler/s_uf", "centroid velocity annealing");
  ov.add<double>(sample, "--s-ur", "/sampler/s_ur", "rotation velocity annealing");
  ov.add<int>(sample, "--n-mc", "/sampler/n_mc", "Monte Carlo points for overlap");
  ov.add<int>(sample, "--max-resample", "/sampler/max_resample", "retries per sample");
  {
    auto slot = std::make_shared<std::string>();
    sample->add_option("--overlap", *slot, "overlap threshold, or 'none'");
    ov.add_raw([slot](json &doc) {
      if (slot->empty())
        return;
      if (*slot == "none") {
        doc["sampler"]["overlap_threshold"] = nullptr;
        return;
      }
      try {
        doc["sampler"]["overlap_threshold"] = std::stod(*slot);
      } catch (const std::exception &) {
        throw Error(ErrorKind::Config, "--overlap expects a number or 'none'");
      }
    });
  }

  auto *evaluate = app.add_subcommand("evaluate", "match predictions against references");
  common(evaluate);
  ov.add<std::string>(evaluate, "--predictions", "/paths/predictions", "predicted structures");
  ov.add<std::string>(evaluate, "--references", "/paths/references", "reference structures");
  ov.add<double>(evaluate, "--stol", "/evaluation/stol", "site tolerance");
  ov.add<double>(evaluate, "--ltol", "/evaluation/ltol", "length tolerance");
  ov.add<double>(evaluate, "--atol", "/evaluation/atol", "angle tolerance, degrees");
  ov.add_flag(evaluate, "--sweep", "/evaluation/sweep", "also sweep the stol grid");

  auto *inspect = app.add_subcommand("inspect", "summarise and validate structure records");
  std::string inspect_path;
  inspect->add_option("input", inspect_path, "JSONL or XYZ file")->required();

  auto *synth = app.add_subcommand("synth", "write a synthetic structure set");
  common(synth);
  int synth_n = 10, synth_max_z = 4, synth_z = 2;
  std::string synth_molecule, synth_output;
  synth->add_option("--n", synth_n, "number of structures");
  synth->add_option("--max-z", synth_max_z, "largest Z in the mixed corpus");
  synth->add_option("--molecule", synth_molecule, "single molecule template");
  synth->add_option("--z", synth_z, "Z for --molecule");
  synth->add_option("--output", synth_output, "output JSONL");

  std::vector<std::string> argv_store{"mcf"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char *> argv;
  for (const auto &a : argv_store)
    argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitFatal;
  }

  try {
    json doc = read_config_document(config_path);
    ov.apply(doc);
    ctx.cfg = io::load_config(doc);
    ctx.effective = io::to_json(ctx.cfg);
    if (pre->parsed())
      return cmd_preprocess(ctx);
    if (fit->parsed())
      return cmd_fit_prior(ctx);
    if (train->parsed())
      return cmd_train(ctx);
    if (sample->parsed())
      return cmd_sample(ctx);
    if (evaluate->parsed())
      return cmd_evaluate(ctx);
    if (inspect->parsed())
      return cmd_inspect(ctx, inspect_path);
    if (synth->parsed())
      return cmd_synth(ctx, synth_n, synth_max_z, synth_molecule, synth_z, synth_output);
  } catch (const Error &e) {
    fmt::print(err, "error [{}]: {}\n", e.tag(), e.what());
    return kExitFatal;
  } catch (const std::exception &e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitFatal;
  }
  return kExitFatal;
}

} // namespace mcf::cli
