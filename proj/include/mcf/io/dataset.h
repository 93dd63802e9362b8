#pragma once
#include <map>
#include <mcf/crystal.h>
#include <mcf/descriptors.h>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace mcf::io {

using json = nlohmann::json;

constexpr int kFormatVersion = 1;

/// Rejects records whose format_version has an unknown major version.
void check_format_version(const json &j, const std::string &where);

struct DatasetRecord {
  crystal::AtomicStructure structure;
  std::optional<descriptors::DescriptorVector> descriptors;
  std::string split; // "train", "val", "test" or empty
};

struct ProcessedRecord {
  crystal::MolecularCrystal crystal;
  std::optional<descriptors::DescriptorVector> descriptors;
  std::string split;
  double roundtrip_residual{0.0};
};

struct Quarantined {
  std::size_t line{0};
  std::string id;
  std::string reason; // error tag
  std::string message;
};

json to_json(const DatasetRecord &r);
DatasetRecord dataset_record_from_json(const json &j);

json to_json(const ProcessedRecord &r);
ProcessedRecord processed_record_from_json(const json &j);

json lattice_to_json(const Mat3 &m);
Mat3 lattice_from_json(const json &j, const std::string &field);
json rows_to_json(const MatN3 &m);
MatN3 rows_from_json(const json &j, const std::string &field);

/// Line-delimited records. Malformed lines are returned as quarantined
/// entries instead of throwing; an unreadable file throws Io.
template <typename Record> struct ReadResult {
  std::vector<Record> records;
  std::vector<Quarantined> quarantined;
};

ReadResult<DatasetRecord> read_dataset(const std::string &path);
ReadResult<ProcessedRecord> read_processed(const std::string &path);

std::vector<json> read_jsonl(const std::string &path);
void write_jsonl(const std::string &path, const std::vector<json> &records);

/// Writes `<path>.schema.json` describing a record kind.
void write_schema(const std::string &path, const std::string &kind);

/// Sidecar descriptor overrides: one {"id", "descriptors"} record per line.
std::map<std::string, descriptors::DescriptorVector>
read_descriptor_sidecar(const std::string &path);

} // namespace mcf::io
