#include <fmt/core.h>
#include <fstream>
#include <mcf/core/error.h>
#include <mcf/elements.h>
#include <mcf/io/dataset.h>

namespace mcf::io {

namespace {
Error schema_error(const std::string &field, const std::string &what) {
  return Error(ErrorKind::Schema, fmt::format("field '{}': {}", field, what));
}

const json &require(const json &j, const std::string &field) {
  if (!j.is_object() || !j.contains(field))
    throw schema_error(field, "missing");
  return j.at(field);
}

double number(const json &j, const std::string &field) {
  if (!j.is_number())
    throw schema_error(field, "expected a number");
  return j.get<double>();
}

std::vector<std::string> string_list(const json &j, const std::string &field) {
  if (!j.is_array())
    throw schema_error(field, "expected an array of strings");
  std::vector<std::string> out;
  for (const auto &x : j) {
    if (!x.is_string())
      throw schema_error(field, "expected an array of strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

std::optional<descriptors::DescriptorVector> descriptors_from(const json &j) {
  if (!j.contains("descriptors") || j.at("descriptors").is_null())
    return std::nullopt;
  const auto &d = j.at("descriptors");
  if (!d.is_array() || d.size() != descriptors::kNumDescriptors)
    throw schema_error("descriptors", fmt::format("expected {} numbers",
                                                  descriptors::kNumDescriptors));
  descriptors::DescriptorVector v;
  for (int k = 0; k < descriptors::kNumDescriptors; k++)
    v[k] = number(d[k], "descriptors");
  return v;
}

std::string split_from(const json &j) {
  if (!j.contains("split") || j.at("split").is_null())
    return "";
  if (!j.at("split").is_string())
    throw schema_error("split", "expected a string");
  return j.at("split").get<std::string>();
}

json vec_to_json(const Vec3 &v) { return json::array({v(0), v(1), v(2)}); }
Vec3 vec_from_json(const json &j, const std::string &field) {
  if (!j.is_array() || j.size() != 3)
    throw schema_error(field, "expected 3 numbers");
  return Vec3(number(j[0], field), number(j[1], field), number(j[2], field));
}

template <typename Record, typename Parse>
ReadResult<Record> read_records(const std::string &path, Parse parse) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::Io, "cannot open " + path);
  ReadResult<Record> out;
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
      out.records.push_back(parse(j));
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
} // namespace

void check_format_version(const json &j, const std::string &where) {
  if (!j.is_object() || !j.contains("format_version"))
    throw Error(ErrorKind::FormatVersion, where + ": missing format_version");
  const auto &v = j.at("format_version");
  if (!v.is_number_integer() || v.get<int>() != kFormatVersion)
    throw Error(ErrorKind::FormatVersion,
                fmt::format("{}: unsupported format_version {} (expected {})",
                            where, v.dump(), kFormatVersion));
}

json lattice_to_json(const Mat3 &m) {
  json out = json::array();
  for (int r = 0; r < 3; r++)
    out.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
  return out;
}

Mat3 lattice_from_json(const json &j, const std::string &field) {
  if (!j.is_array() || j.size() != 3)
    throw schema_error(field, "expected a 3x3 array");
  Mat3 m;
  for (int r = 0; r < 3; r++)
    m.row(r) = vec_from_json(j[r], field).transpose();
  return m;
}

json rows_to_json(const MatN3 &m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); r++)
    out.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
  return out;
}

MatN3 rows_from_json(const json &j, const std::string &field) {
  if (!j.is_array())
    throw schema_error(field, "expected an array of 3-vectors");
  MatN3 m(static_cast<Eigen::Index>(j.size()), 3);
  for (std::size_t r = 0; r < j.size(); r++)
    m.row(static_cast<Eigen::Index>(r)) = vec_from_json(j[r], field).transpose();
  return m;
}

json to_json(const DatasetRecord &r) {
  json j;
  j["format_version"] = kFormatVersion;
  j["id"] = r.structure.id;
  j["lattice"] = lattice_to_json(r.structure.lattice);
  j["species"] = r.structure.species;
  j["cart"] = rows_to_json(r.structure.cart);
  if (r.descriptors)
    j["descriptors"] = *r.descriptors;
  if (!r.split.empty())
    j["split"] = r.split;
  return j;
}

DatasetRecord dataset_record_from_json(const json &j) {
  check_format_version(j, "dataset record");
  DatasetRecord r;
  const auto &id = require(j, "id");
  if (!id.is_string())
    throw schema_error("id", "expected a string");
  r.structure.id = id.get<std::string>();
  r.structure.lattice = lattice_from_json(require(j, "lattice"), "lattice");
  r.structure.species = string_list(require(j, "species"), "species");
  r.structure.cart = rows_from_json(require(j, "cart"), "cart");
  r.descriptors = descriptors_from(j);
  r.split = split_from(j);
  r.structure.validate();
  return r;
}

json to_json(const ProcessedRecord &r) {
  json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "processed";
  j["id"] = r.crystal.id;
  j["lattice"] = lattice_to_json(r.crystal.lattice);
  j["frame_rotation"] = lattice_to_json(r.crystal.frame_rotation);
  json blocks = json::array();
  for (const auto &b : r.crystal.blocks) {
    json jb;
    jb["species"] = b.species;
    jb["atom_indices"] = b.atom_indices;
    jb["internal"] = rows_to_json(b.internal);
    jb["centroid_frac"] = vec_to_json(b.centroid_frac);
    jb["rotation"] = lattice_to_json(b.rotation);
    jb["chi"] = b.chi;
    jb["type_id"] = b.type_id;
    blocks.push_back(std::move(jb));
  }
  j["blocks"] = std::move(blocks);
  if (r.descriptors)
    j["descriptors"] = *r.descriptors;
  if (!r.split.empty())
    j["split"] = r.split;
  j["diagnostics"] = {{"z", r.crystal.z()}, {"roundtrip_residual", r.roundtrip_residual}};
  return j;
}

ProcessedRecord processed_record_from_json(const json &j) {
  check_format_version(j, "processed record");
  ProcessedRecord r;
  const auto &id = require(j, "id");
  if (!id.is_string())
    throw schema_error("id", "expected a string");
  r.crystal.id = id.get<std::string>();
  r.crystal.lattice = lattice_from_json(require(j, "lattice"), "lattice");
  if (j.contains("frame_rotation"))
    r.crystal.frame_rotation = lattice_from_json(j.at("frame_rotation"), "frame_rotation");
  const auto &blocks = require(j, "blocks");
  if (!blocks.is_array())
    throw schema_error("blocks", "expected an array");
  for (const auto &jb : blocks) {
    crystal::BuildingBlock b;
    b.species = string_list(require(jb, "species"), "blocks.species");
    b.masses = atomic_masses(b.species);
    b.internal = rows_from_json(require(jb, "internal"), "blocks.internal");
    if (b.internal.rows() != static_cast<Eigen::Index>(b.species.size()))
      throw schema_error("blocks.internal", "row count differs from species");
    b.centroid_frac = vec_from_json(require(jb, "centroid_frac"), "blocks.centroid_frac");
    b.rotation = lattice_from_json(require(jb, "rotation"), "blocks.rotation");
    const auto &chi = require(jb, "chi");
    if (!chi.is_number_integer() || (chi.get<int>() != 0 && chi.get<int>() != 1))
      throw schema_error("blocks.chi", "expected 0 or 1");
    b.chi = chi.get<int>();
    if (jb.contains("type_id"))
      b.type_id = jb.at("type_id").get<int>();
    if (jb.contains("atom_indices"))
      b.atom_indices = jb.at("atom_indices").get<std::vector<int>>();
    r.crystal.blocks.push_back(std::move(b));
  }
  r.descriptors = descriptors_from(j);
  r.split = split_from(j);
  if (j.contains("diagnostics") && j.at("diagnostics").contains("roundtrip_residual"))
    r.roundtrip_residual = j.at("diagnostics").at("roundtrip_residual").get<double>();
  return r;
}

ReadResult<DatasetRecord> read_dataset(const std::string &path) {
  return read_records<DatasetRecord>(path, dataset_record_from_json);
}

ReadResult<ProcessedRecord> read_processed(const std::string &path) {
  return read_records<ProcessedRecord>(path, processed_record_from_json);
}

std::vector<json> read_jsonl(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::Io, "cannot open " + path);
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception &e) {
      throw Error(ErrorKind::Schema, fmt::format("{} line {}: {}", path, lineno, e.what()));
    }
  }
  return out;
}

void write_jsonl(const std::string &path, const std::vector<json> &records) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::Io, "cannot write " + path);
  for (const auto &r : records)
    out << r.dump() << '\n';
  if (!out)
    throw Error(ErrorKind::Io, "write failed for " + path);
}

void write_schema(const std::string &path, const std::string &kind) {
  json s;
  s["format_version"] = kFormatVersion;
  s["kind"] = kind;
  if (kind == "structures") {
    s["fields"] = {
        {"format_version", "integer, must equal the schema format_version"},
        {"id", "string, unique per record"},
        {"lattice", "3x3 array, rows are lattice vectors in Angstrom, det > 0"},
        {"species", "array of element symbols"},
        {"cart", "N x 3 array of Cartesian coordinates in Angstrom"},
        {"descriptors", "optional array of 18 numbers overriding computed descriptors"},
        {"split", "optional string: train, val or test"}};
  } else if (kind == "processed") {
    s["fields"] = {
        {"id", "string"},
        {"lattice", "3x3 standardised lattice (lower triangular, sorted lengths)"},
        {"frame_rotation", "3x3 rotation from input to standardised frame"},
        {"blocks", "array of {species, atom_indices, internal (m x 3, Angstrom), "
                   "centroid_frac (3), rotation (3x3), chi (0/1), type_id}"},
        {"diagnostics", "{z, roundtrip_residual (Angstrom)}"}};
  } else if (kind == "evaluation") {
    s["fields"] = {
        {"record", "'target' per reference id or 'summary' once"},
        {"matched", "bool"},
        {"best_rms", "normalised rms of the best sample"},
        {"match_rate", "summary: fraction of matched targets"},
        {"volume_rmad_percent", "summary: mean |V_pred - V_ref| / V_ref x 100"}};
  } else {
    throw Error(ErrorKind::InvalidParameter, "unknown schema kind '" + kind + "'");
  }
  std::ofstream out(path + ".schema.json");
  if (!out)
    throw Error(ErrorKind::Io, "cannot write schema for " + path);
  out << s.dump(2) << '\n';
}

std::map<std::string, descriptors::DescriptorVector>
read_descriptor_sidecar(const std::string &path) {
  std::map<std::string, descriptors::DescriptorVector> out;
  for (const auto &j : read_jsonl(path)) {
    const auto &id = require(j, "id");
    if (!id.is_string())
      throw schema_error("id", "expected a string");
    auto d = descriptors_from(j);
    if (!d)
      throw schema_error("descriptors", "missing");
    out[id.get<std::string>()] = *d;
  }
  return out;
}

} // namespace mcf::io
