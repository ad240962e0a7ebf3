#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stepattn/sample.hpp"

namespace stepattn {

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr const char* kManifestSchemaName = "stepattn.manifest";
inline constexpr const char* kDataRootEnv = "STEPATTN_DATA_ROOT";

/// Malformed or missing dataset content. what() carries the sample id and row when known.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Source layout not recognized by convert_raw.
class UnsupportedLayoutError : public DataError {
 public:
  using DataError::DataError;
};

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory
  std::string subject;
  SampleMeta meta;
  double fs_hz = 0.0;
  std::int64_t step_count = 0;
};

struct Manifest {
  std::string dataset_name;
  std::vector<ManifestEntry> samples;
};

struct Dataset {
  std::string name;
  std::vector<SignalSample> samples;
};

Manifest read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const std::filesystem::path& manifest_path, const Manifest& manifest);

/// Loads every sample referenced by the manifest. Fails on the first malformed sample without
/// returning partial results.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes `<dir>/samples/<id>.csv` for every sample plus `<dir>/manifest.jsonl`.
/// Returns the manifest path.
std::filesystem::path save_dataset(const std::filesystem::path& dir, const std::string& name,
                                   const std::vector<SignalSample>& samples);

/// Canonical sample CSV: header `t,ax,ay,az`, t = i / fs seconds, 17 significant digits.
void write_sample_csv(const std::filesystem::path& path, const SignalSample& sample);
/// Returns the L x 3 signal. Errors name `sample_id` and the 1-based file row.
Matrix read_sample_csv(const std::filesystem::path& path, const std::string& sample_id);

struct LabelStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double std = 0.0;   // sample (n - 1) standard deviation, 0 for n = 1
  double skew = 0.0;  // biased Fisher-Pearson m3 / m2^1.5, 0 for zero variance
  std::size_t n = 0;
};

LabelStats label_stats(const std::vector<SignalSample>& samples);
LabelStats label_stats(std::span<const double> labels);

/// Published label statistics of a known dataset subset, when available.
struct ReferenceStats {
  std::string name;
  LabelStats stats;
};
/// Known names: wdsc, weallwalk, pedometer-regular, pedometer-semi-regular.
std::optional<ReferenceStats> reference_stats(const std::string& name);

struct StatsCheck {
  std::string name;
  LabelStats observed;
  LabelStats expected;
  bool min_max_exact = false;
  double mean_rel_dev = 0.0;
  double std_rel_dev = 0.0;
  double skew_rel_dev = 0.0;
  bool passed(double tolerance = 0.02) const;
};

StatsCheck check_stats(const std::string& reference_name, const LabelStats& observed);

/// Samples from the known subsets of a dataset, keyed by reference name
/// (pedometer splits into its regular and semi-regular subsets).
std::vector<std::pair<std::string, std::vector<SignalSample>>> reference_subsets(
    const Dataset& dataset);

struct ConvertResult {
  Manifest manifest;
  std::filesystem::path manifest_path;
  std::vector<StatsCheck> checks;
};

/// Converts a staged source directory into the canonical format (see README, "Conversion
/// contract"). WDSC signals are cropped to their annotated walk interval.
ConvertResult convert_raw(const std::string& dataset_name, const std::filesystem::path& source_dir,
                          const std::filesystem::path& out_dir);

/// Directory named by STEPATTN_DATA_ROOT, if set.
std::optional<std::filesystem::path> data_root_from_env();

}  // namespace stepattn
