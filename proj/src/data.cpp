#include "stepattn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace stepattn {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::string where(const std::string& id, std::size_t row) {
  return "sample '" + id + "', row " + std::to_string(row);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool is_canonical_header(std::string_view line) {
  const auto cols = split(trim(line));
  return cols.size() == 4 && trim(cols[0]) == "t" && trim(cols[1]) == "ax" &&
         trim(cols[2]) == "ay" && trim(cols[3]) == "az";
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Sample files

void write_sample_csv(const fs::path& path, const SignalSample& sample) {
  if (sample.raw.cols() != 3)
    throw DataError("sample '" + sample.id + "': expected 3 channels, got " +
                    sample.raw.shape_str());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "t,ax,ay,az\n";
  for (std::size_t i = 0; i < sample.raw.rows(); ++i) {
    out << format_double(static_cast<double>(i) / sample.fs_hz);
    for (std::size_t c = 0; c < 3; ++c) out << ',' << format_double(sample.raw(i, c));
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

Matrix read_sample_csv(const fs::path& path, const std::string& sample_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("sample '" + sample_id + "': missing file " + path.string());
  std::string line;
  if (!std::getline(in, line) || !is_canonical_header(line))
    throw DataError(where(sample_id, 1) + ": expected header 't,ax,ay,az'");

  std::vector<double> values;
  std::size_t row = 1;
  double prev_t = -INFINITY;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != 4)
      throw DataError(where(sample_id, row) + ": expected 4 columns, got " +
                      std::to_string(cells.size()));
    double parsed[4];
    for (std::size_t c = 0; c < 4; ++c) {
      const auto v = parse_double(cells[c]);
      if (!v) throw DataError(where(sample_id, row) + ": non-numeric cell '" +
                              std::string(trim(cells[c])) + "'");
      if (!std::isfinite(*v)) throw DataError(where(sample_id, row) + ": non-finite value");
      parsed[c] = *v;
    }
    if (!(parsed[0] > prev_t)) throw DataError(where(sample_id, row) + ": time is not increasing");
    prev_t = parsed[0];
    values.insert(values.end(), parsed + 1, parsed + 4);
  }
  if (values.empty()) throw DataError("sample '" + sample_id + "': no data rows");
  const std::size_t rows = values.size() / 3;
  return Matrix(rows, 3, std::move(values));
}

// ---------------------------------------------------------------------------------------------
// Manifest

Manifest read_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest " + manifest_path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest " + manifest_path.string() + " is empty");
  Manifest m;
  try {
    const json header = json::parse(line);
    if (header.value("schema", "") != kManifestSchemaName)
      throw DataError("manifest: missing schema header '" + std::string(kManifestSchemaName) + "'");
    const int version = header.at("version").get<int>();
    if (version != kManifestSchemaVersion)
      throw DataError("manifest: unsupported schema version " + std::to_string(version));
    m.dataset_name = header.at("dataset").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError("manifest header: " + std::string(e.what()));
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json r = json::parse(line);
      ManifestEntry e;
      e.id = r.at("id").get<std::string>();
      e.path = r.at("path").get<std::string>();
      e.subject = r.at("subject").get<std::string>();
      e.meta.placement = r.value("placement", "");
      e.meta.population = parse_population(r.value("population", "n/a"));
      e.meta.regularity = parse_regularity(r.value("regularity", "n/a"));
      e.fs_hz = r.at("fs_hz").get<double>();
      e.step_count = r.at("step_count").get<std::int64_t>();
      m.samples.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return m;
}

void write_manifest(const fs::path& manifest_path, const Manifest& manifest) {
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + manifest_path.string());
  out << json{{"schema", kManifestSchemaName},
              {"version", kManifestSchemaVersion},
              {"dataset", manifest.dataset_name}}
             .dump()
      << '\n';
  for (const ManifestEntry& e : manifest.samples) {
    json r = json::object();
    r["id"] = e.id;
    r["path"] = e.path;
    r["subject"] = e.subject;
    r["placement"] = e.meta.placement;
    r["population"] = std::string(to_string(e.meta.population));
    r["regularity"] = std::string(to_string(e.meta.regularity));
    r["fs_hz"] = e.fs_hz;
    r["step_count"] = e.step_count;
    out << r.dump() << '\n';
  }
}

Dataset load_dataset(const fs::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  Dataset d;
  d.name = m.dataset_name;
  std::set<std::string> ids;
  for (const ManifestEntry& e : m.samples) {
    if (!ids.insert(e.id).second) throw DataError("sample '" + e.id + "': duplicate id");
    if (e.subject.empty()) throw DataError("sample '" + e.id + "': empty subject");
    if (!(e.fs_hz > 0.0)) throw DataError("sample '" + e.id + "': fs_hz must be positive");
    if (e.step_count < 0) throw DataError("sample '" + e.id + "': negative step count");
    SignalSample s;
    s.id = e.id;
    s.subject = e.subject;
    s.meta = e.meta;
    s.fs_hz = e.fs_hz;
    s.step_count = e.step_count;
    s.raw = read_sample_csv(base / e.path, e.id);
    d.samples.push_back(std::move(s));
  }
  return d;
}

fs::path save_dataset(const fs::path& dir, const std::string& name,
                      const std::vector<SignalSample>& samples) {
  fs::create_directories(dir / "samples");
  Manifest m;
  m.dataset_name = name;
  for (const SignalSample& s : samples) {
    const std::string rel = "samples/" + s.id + ".csv";
    write_sample_csv(dir / rel, s);
    m.samples.push_back({s.id, rel, s.subject, s.meta, s.fs_hz, s.step_count});
  }
  const fs::path manifest_path = dir / "manifest.jsonl";
  write_manifest(manifest_path, m);
  return manifest_path;
}

// ---------------------------------------------------------------------------------------------
// Label statistics

LabelStats label_stats(std::span<const double> labels) {
  if (labels.empty()) throw std::invalid_argument("label_stats: empty sample set");
  LabelStats s;
  s.n = labels.size();
  s.min = *std::min_element(labels.begin(), labels.end());
  s.max = *std::max_element(labels.begin(), labels.end());
  double sum = 0.0;
  for (double v : labels) sum += v;
  const double n = static_cast<double>(s.n);
  s.mean = sum / n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : labels) {
    const double d = v - s.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  s.std = s.n > 1 ? std::sqrt(m2 / (n - 1.0)) : 0.0;
  m2 /= n;
  m3 /= n;
  s.skew = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  return s;
}

LabelStats label_stats(const std::vector<SignalSample>& samples) {
  std::vector<double> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(static_cast<double>(s.step_count));
  return label_stats(labels);
}

std::optional<ReferenceStats> reference_stats(const std::string& name) {
  static const std::map<std::string, LabelStats> table = {
      {"wdsc", {63, 106, 78, 8.46, 0.56, 117}},
      {"weallwalk", {2, 136, 40.71, 33.29, 0.81, 932}},
      {"pedometer-regular", {857, 1100, 991.03, 54.03, -0.27, 90}},
      {"pedometer-semi-regular", {548, 814, 704.03, 65.57, -0.21, 90}},
  };
  const auto it = table.find(name);
  if (it == table.end()) return std::nullopt;
  return ReferenceStats{name, it->second};
}

bool StatsCheck::passed(double tolerance) const {
  return min_max_exact && mean_rel_dev <= tolerance && std_rel_dev <= tolerance &&
         skew_rel_dev <= tolerance;
}

StatsCheck check_stats(const std::string& reference_name, const LabelStats& observed) {
  const auto ref = reference_stats(reference_name);
  if (!ref) throw std::invalid_argument("no reference statistics for '" + reference_name + "'");
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-12); };
  StatsCheck c;
  c.name = reference_name;
  c.observed = observed;
  c.expected = ref->stats;
  c.min_max_exact = observed.min == ref->stats.min && observed.max == ref->stats.max;
  c.mean_rel_dev = rel(observed.mean, ref->stats.mean);
  c.std_rel_dev = rel(observed.std, ref->stats.std);
  c.skew_rel_dev = rel(observed.skew, ref->stats.skew);
  return c;
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

std::vector<std::pair<std::string, std::vector<SignalSample>>> reference_subsets(
    const Dataset& dataset) {
  const std::string name = lower(dataset.name);
  std::vector<std::pair<std::string, std::vector<SignalSample>>> out;
  if (name == "wdsc" || name == "weallwalk") {
    out.emplace_back(name, dataset.samples);
  } else if (name == "pedometer") {
    std::vector<SignalSample> reg, semi;
    for (const auto& s : dataset.samples) {
      if (s.meta.regularity == Regularity::kRegular) reg.push_back(s);
      if (s.meta.regularity == Regularity::kSemiRegular) semi.push_back(s);
    }
    out.emplace_back("pedometer-regular", std::move(reg));
    out.emplace_back("pedometer-semi-regular", std::move(semi));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Conversion from the staged layout

namespace {

constexpr const char* kIndexName = "index.csv";
constexpr const char* kIndexHeader =
    "file,subject,placement,population,regularity,fs_hz,step_count,start_s,end_s";

struct RawSignal {
  std::vector<double> t;
  std::vector<double> xyz;
};

// Accepts `t,ax,ay,az` (with or without that header) or bare `ax,ay,az` rows.
RawSignal read_raw_signal(const fs::path& path, const std::string& id, double fs_hz) {
  std::ifstream in(path);
  if (!in) throw DataError("sample '" + id + "': missing source file " + path.string());
  RawSignal r;
  std::string line;
  std::size_t row = 0;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line));
    if (row == 1 && !parse_double(cells[0])) continue;  // header
    if (cells.size() != 3 && cells.size() != 4)
      throw DataError(where(id, row) + ": expected 3 or 4 columns");
    std::vector<double> v;
    for (auto c : cells) {
      const auto d = parse_double(c);
      if (!d) throw DataError(where(id, row) + ": non-numeric cell '" + std::string(trim(c)) + "'");
      if (!std::isfinite(*d)) throw DataError(where(id, row) + ": non-finite value");
      v.push_back(*d);
    }
    if (v.size() == 4) {
      r.t.push_back(v[0]);
      r.xyz.insert(r.xyz.end(), v.begin() + 1, v.end());
    } else {
      r.t.push_back(static_cast<double>(index) / fs_hz);
      r.xyz.insert(r.xyz.end(), v.begin(), v.end());
    }
    ++index;
  }
  return r;
}

std::string sanitize_id(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return s;
}

}  // namespace

ConvertResult convert_raw(const std::string& dataset_name, const fs::path& source_dir,
                          const fs::path& out_dir) {
  const std::string name = lower(dataset_name);
  if (name != "wdsc" && name != "weallwalk" && name != "pedometer")
    throw UnsupportedLayoutError("unknown dataset '" + dataset_name +
                                 "' (expected wdsc, weallwalk, pedometer)");
  const fs::path index_path = source_dir / kIndexName;
  if (!fs::is_regular_file(index_path))
    throw UnsupportedLayoutError("unsupported layout in " + source_dir.string() +
                                 ": expected files: " + kIndexName + " (header '" + kIndexHeader +
                                 "') and the accelerometer CSV files it lists");
  std::ifstream in(index_path);
  std::string line;
  std::getline(in, line);
  if (std::string(trim(line)) != kIndexHeader)
    throw UnsupportedLayoutError(index_path.string() + ": expected header '" + kIndexHeader + "'");

  std::vector<SignalSample> samples;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line));
    if (cells.size() != 9)
      throw DataError(index_path.string() + " row " + std::to_string(row) + ": expected 9 columns");
    const std::string file(trim(cells[0]));
    const std::string id = sanitize_id(fs::path(file).stem().string());
    const auto fs_hz = parse_double(cells[5]);
    const auto steps = parse_double(cells[6]);
    if (!fs_hz || !(*fs_hz > 0.0) || !steps || *steps < 0 || std::floor(*steps) != *steps)
      throw DataError(where(id, row) + " of index: invalid fs_hz or step_count");
    const auto start = parse_double(cells[7]);
    const auto end = parse_double(cells[8]);
    if (name == "wdsc" && (!start || !end))
      throw DataError(where(id, row) + " of index: WDSC requires start_s and end_s");

    const RawSignal raw = read_raw_signal(source_dir / file, id, *fs_hz);
    std::vector<double> kept;
    for (std::size_t i = 0; i < raw.t.size(); ++i) {
      if (start && raw.t[i] < *start) continue;
      if (end && raw.t[i] > *end) continue;
      kept.insert(kept.end(), raw.xyz.begin() + 3 * i, raw.xyz.begin() + 3 * i + 3);
    }
    if (kept.empty()) throw DataError("sample '" + id + "': empty after cropping");

    SignalSample s;
    s.id = id;
    s.subject = std::string(trim(cells[1]));
    s.meta.placement = std::string(trim(cells[2]));
    s.meta.population = parse_population(trim(cells[3]));
    s.meta.regularity = parse_regularity(trim(cells[4]));
    s.fs_hz = *fs_hz;
    s.step_count = static_cast<std::int64_t>(*steps);
    const std::size_t rows = kept.size() / 3;
    s.raw = Matrix(rows, 3, std::move(kept));
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw UnsupportedLayoutError(index_path.string() + ": lists no samples");

  ConvertResult result;
  result.manifest_path = save_dataset(out_dir, name, samples);
  result.manifest = read_manifest(result.manifest_path);
  const Dataset d{name, std::move(samples)};
  for (const auto& [ref, subset] : reference_subsets(d))
    if (!subset.empty()) result.checks.push_back(check_stats(ref, label_stats(subset)));
  return result;
}

std::optional<fs::path> data_root_from_env() {
  const char* v = std::getenv(kDataRootEnv);
  if (!v || !*v) return std::nullopt;
  return fs::path(v);
}

}  // namespace stepattn
