#include "stepattn/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "stepattn/baselines.hpp"
#include "stepattn/checkpoint.hpp"
#include "stepattn/data.hpp"
#include "stepattn/eval.hpp"
#include "stepattn/log.hpp"
#include "stepattn/pipeline.hpp"
#include "stepattn/train.hpp"

namespace stepattn {

namespace fs = std::filesystem;

namespace {

struct ModelFlags {
  int hidden = 128;
  int layers = 2;
  bool attention = true;
  bool attention_bias = true;
  std::string head = "two-layer";
  std::string activation = "identity";

  void add(CLI::App* cmd) {
    cmd->add_option("--hidden", hidden, "LSTM hidden size")->check(CLI::PositiveNumber);
    cmd->add_option("--layers", layers, "Stacked LSTM layers")->check(CLI::PositiveNumber);
    cmd->add_flag("--attention,!--no-attention", attention, "Use the attention mechanism");
    cmd->add_flag("--attention-bias,!--no-attention-bias", attention_bias,
                  "Bias term in the attention layer");
    cmd->add_option("--head", head, "Regression head")->check(CLI::IsMember({"two-layer", "single"}));
    cmd->add_option("--head-activation", activation, "Activation between head layers")
        ->check(CLI::IsMember({"identity", "tanh"}));
  }

  ModelConfig config(InputMode mode) const {
    ModelConfig c;
    c.input_size = channel_count(mode);
    c.hidden_size = hidden;
    c.num_layers = layers;
    c.use_attention = attention;
    c.attention_bias = attention_bias;
    c.head = head == "single" ? HeadKind::kSingleLinear : HeadKind::kTwoLayer;
    c.head_activation = activation == "tanh" ? HeadActivation::kTanh : HeadActivation::kIdentity;
    return c;
  }
};

struct TrainFlags {
  TrainConfig cfg;

  void add(CLI::App* cmd) {
    cmd->add_option("--epochs", cfg.epochs, "Training epochs")->check(CLI::PositiveNumber);
    cmd->add_option("--batch", cfg.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", cfg.lr0, "Initial learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--lr-step", cfg.lr_step_epochs, "Epochs between learning-rate drops")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--lr-decay", cfg.lr_decay_factor, "Learning-rate divisor per drop")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", cfg.seed, "Master seed (initialization, shuffling, folds)");
    cmd->add_option("--threads", cfg.threads, "Threads for per-sample gradients")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--grad-clip", cfg.grad_clip, "Global gradient-norm clip (0 = off)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_flag("--verbose", cfg.verbose, "Log every epoch");
  }
};

struct InputFlags {
  std::string mode = "l2";
  std::size_t downsample = 0;
  bool anti_alias = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--input", mode, "Input channels")->check(CLI::IsMember({"l2", "xyz", "l2xyz"}));
    cmd->add_option("--downsample", downsample,
                    "Decimation factor (0 = auto: 4 for 100 Hz data, otherwise 1)");
    cmd->add_flag("--anti-alias", anti_alias, "Moving-average filter before decimation");
  }

  InputOptions resolve(const std::vector<SignalSample>& samples) const {
    InputOptions o;
    o.mode = parse_input_mode(mode);
    o.anti_alias = anti_alias;
    o.downsample_factor = downsample;
    if (o.downsample_factor == 0) {
      const bool all_100 = !samples.empty() && std::all_of(samples.begin(), samples.end(),
                                                           [](const SignalSample& s) {
                                                             return s.fs_hz == 100.0;
                                                           });
      o.downsample_factor = all_100 ? 4 : 1;
    }
    return o;
  }
};

struct DatasetFlags {
  std::string manifest;
  std::string population;
  std::string regularity;
  std::string placement;

  void add(CLI::App* cmd, bool required = true) {
    auto* opt = cmd->add_option("--dataset", manifest,
                                "Dataset manifest (relative paths also tried under $" +
                                    std::string(kDataRootEnv) + ")");
    if (required) opt->required();
    cmd->add_option("--population", population, "Keep one population (sighted, cane, dog)");
    cmd->add_option("--regularity", regularity, "Keep one regularity (regular, semi-regular)");
    cmd->add_option("--placement", placement, "Keep one sensor placement");
  }

  Dataset load() const {
    fs::path path(manifest);
    if (!fs::exists(path) && path.is_relative())
      if (const auto root = data_root_from_env(); root && fs::exists(*root / path)) path = *root / path;
    Dataset d = load_dataset(path);
    std::vector<SignalSample> kept;
    const auto pop = population.empty() ? std::nullopt : std::optional(parse_population(population));
    const auto reg = regularity.empty() ? std::nullopt : std::optional(parse_regularity(regularity));
    for (auto& s : d.samples) {
      if (pop && s.meta.population != *pop) continue;
      if (reg && s.meta.regularity != *reg) continue;
      if (!placement.empty() && s.meta.placement != placement) continue;
      kept.push_back(std::move(s));
    }
    if (kept.empty()) throw DataError("no samples left after filtering " + manifest);
    d.samples = std::move(kept);
    return d;
  }
};

struct MetricFlags {
  std::string count_mode = "steps";
  bool round = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--count-mode", count_mode, "UC/OC normalization")
        ->check(CLI::IsMember({"steps", "samples"}));
    cmd->add_flag("--round", round, "Round predictions to integers before scoring");
  }

  MetricOptions options() const {
    MetricOptions o;
    o.count_normalization =
        count_mode == "samples" ? CountNormalization::kSamples : CountNormalization::kSteps;
    o.round_predictions = round;
    return o;
  }
};

/// Collects output files and deletes them unless commit() is called.
class OutputSet {
 public:
  ~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
  }
  std::ofstream open(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    written_.push_back(p);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
  }
  void track(const fs::path& p) { written_.push_back(p); }
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> written_;
  bool committed_ = false;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_predictions(std::ostream& out, const std::vector<SamplePrediction>& preds) {
  out << "id,subject,fold,true,pred\n";
  for (const auto& p : preds)
    out << p.id << ',' << p.subject << ',' << p.fold << ',' << num(p.truth) << ',' << num(p.pred)
        << '\n';
}

void write_run_report(std::ostream& out, const std::string& dataset, const std::string& scheme,
                      InputMode mode, const std::string& label, const MetricsReport& r,
                      double wall_s) {
  out << "dataset " << dataset << '\n'
      << "scheme " << scheme << '\n'
      << "input " << to_string(mode) << '\n'
      << "model " << label << '\n'
      << format_report(r) << "wall_time_s " << num(wall_s) << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------------------------

struct SynthCmd {
  std::size_t n = 200;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string name = "synthetic";
  bool clean = false;
  bool noisy = false;
  SynthFamily family;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("synth", "Write a synthetic walking dataset");
    c->add_option("--n", n, "Number of samples")->check(CLI::PositiveNumber);
    c->add_option("--seed", seed, "Generator seed");
    c->add_option("--out", out_dir, "Output directory")->required();
    c->add_option("--name", name, "Dataset name in the manifest");
    auto* clean_flag = c->add_flag("--clean", clean, "No noise, jitter or pauses");
    c->add_flag("--noisy", noisy, "Heavy noise and frequent pauses")->excludes(clean_flag);
    c->add_option("--fs", family.fs_hz, "Sampling rate (Hz)")->check(CLI::PositiveNumber);
    c->add_option("--noise", family.noise_sd, "White-noise standard deviation");
    c->add_option("--pause-prob", family.pause_prob, "Pause probability before each step");
    c->add_option("--min-steps", family.min_steps);
    c->add_option("--max-steps", family.max_steps);
    c->add_option("--min-duration", family.min_duration_s);
    c->add_option("--max-duration", family.max_duration_s);
    c->add_option("--subjects", family.subjects, "Distinct subject ids")->check(CLI::PositiveNumber);
    c->callback([this] { run = true; });
  }

  int exec(std::ostream& out) {
    SynthFamily f = family;
    if (clean) {
      const SynthFamily c = clean_family();
      f.noise_sd = c.noise_sd;
      f.pause_prob = c.pause_prob;
      f.shape = c.shape;
    }
    if (noisy) {
      const SynthFamily nf = noisy_family();
      f.noise_sd = nf.noise_sd;
      f.pause_prob = nf.pause_prob;
    }
    const auto samples = synthesize_dataset(f, n, seed);
    const fs::path manifest = save_dataset(out_dir, name, samples);
    out << "wrote " << samples.size() << " samples to " << manifest.string() << '\n';
    return kExitOk;
  }
  bool run = false;
};

struct StatsCmd {
  std::string positional;
  DatasetFlags data;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("stats", "Print label statistics of a dataset");
    c->add_option("manifest", positional, "Dataset manifest");
    data.add(c, false);
    c->callback([this] { run = true; });
  }

  int exec(std::ostream& out) {
    if (data.manifest.empty()) data.manifest = positional;
    if (data.manifest.empty()) throw CLI::RequiredError("manifest or --dataset");
    const Dataset d = data.load();
    const LabelStats s = label_stats(d.samples);
    out << "dataset " << d.name << '\n'
        << "n " << s.n << '\n'
        << "min " << num(s.min) << '\n'
        << "max " << num(s.max) << '\n'
        << "mean " << num(s.mean) << '\n'
        << "std " << num(s.std) << '\n'
        << "skew " << num(s.skew) << '\n';
    if (data.population.empty() && data.regularity.empty() && data.placement.empty()) {
      for (const auto& [ref, subset] : reference_subsets(d)) {
        if (subset.empty()) continue;
        const StatsCheck c = check_stats(ref, label_stats(subset));
        out << "reference " << ref << ' ' << (c.passed() ? "match" : "MISMATCH")
            << " min/max " << (c.min_max_exact ? "exact" : "differ") << " mean_dev "
            << num(c.mean_rel_dev) << " std_dev " << num(c.std_rel_dev) << " skew_dev "
            << num(c.skew_rel_dev) << '\n';
      }
    }
    return kExitOk;
  }
  bool run = false;
};

struct ConvertCmd {
  std::string name;
  std::string source;
  std::string out_dir;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("convert", "Convert a staged dataset into the canonical format");
    c->add_option("--name", name, "wdsc, weallwalk or pedometer")->required();
    c->add_option("--source", source, "Staged source directory")->required();
    c->add_option("--out", out_dir, "Output directory")->required();
    c->callback([this] { run = true; });
  }

  int exec(std::ostream& out) {
    const ConvertResult r = convert_raw(name, source, out_dir);
    out << "wrote " << r.manifest.samples.size() << " samples to " << r.manifest_path.string()
        << '\n';
    for (const auto& c : r.checks)
      out << "reference " << c.name << ' ' << (c.passed() ? "match" : "MISMATCH") << " mean "
          << num(c.observed.mean) << " (expected " << num(c.expected.mean) << ") std "
          << num(c.observed.std) << " (expected " << num(c.expected.std) << ")\n";
    return kExitOk;
  }
  bool run = false;
};

struct TrainCmd {
  DatasetFlags data;
  ModelFlags model;
  TrainFlags train;
  InputFlags input;
  std::string validation;
  std::string out_path;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Train on a whole dataset and save a checkpoint");
    data.add(c);
    model.add(c);
    train.add(c);
    input.add(c);
    c->add_option("--validation", validation, "Optional validation manifest");
    c->add_option("--out", out_path, "Checkpoint path")->required();
    c->callback([this] { run = true; });
  }

  int exec(std::ostream& out) {
    const Dataset d = data.load();
    const InputOptions io = input.resolve(d.samples);
    const ModelConfig mc = model.config(io.mode);
    const auto prepared = prepare(d.samples, io);
    std::vector<PreparedSample> val;
    if (!validation.empty()) val = prepare(load_dataset(validation).samples, io);
    const auto t0 = std::chrono::steady_clock::now();
    FitResult r = fit(mc, init_params(mc, train.cfg.seed), prepared, train.cfg,
                      validation.empty() ? nullptr : &val);
    OutputSet outputs;
    outputs.track(out_path);
    if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
    save_checkpoint(out_path, {mc, std::move(r.params), train.cfg, io, train.cfg.seed,
                               train.cfg.epochs});
    outputs.commit();
    const EpochRecord& last = r.history.epochs.back();
    out << "trained " << model_label(mc, io.mode) << " on " << prepared.size() << " samples for "
        << train.cfg.epochs << " epochs in " << num(seconds_since(t0)) << " s; final train MAE "
        << num(last.train_loss);
    if (last.validation_mae) out << ", validation MAE " << num(*last.validation_mae);
    out << "\ncheckpoint " << out_path << '\n';
    return kExitOk;
  }
  bool run = false;
};

struct EvalCmd {
  std::string checkpoint;
  DatasetFlags data;
  MetricFlags metrics;
  std::string out_dir;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "Score a checkpoint on a dataset");
    c->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
    data.add(c);
    metrics.add(c);
    c->add_option("--out", out_dir, "Directory for report.txt, table.csv, predictions.csv");
    c->callback([this] { run = true; });
  }

  int exec(std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const Checkpoint ck = load_checkpoint(checkpoint);
    const Dataset d = data.load();
    std::vector<SamplePrediction> preds;
    std::vector<double> p, t;
    for (const auto& s : d.samples) {
      const double y = predict(ck.params, ck.model, build_input(s, ck.input).channels).value;
      preds.push_back({s.id, s.subject, static_cast<double>(s.step_count), y, 0});
      p.push_back(y);
      t.push_back(static_cast<double>(s.step_count));
    }
    const MetricsReport r = compute_metrics(p, t, metrics.options());
    const std::string label = model_label(ck.model, ck.input.mode);
    write_run_report(out, d.name, "holdout", ck.input.mode, label, r, seconds_since(t0));
    if (!out_dir.empty()) {
      OutputSet outputs;
      auto rep = outputs.open(fs::path(out_dir) / "report.txt");
      write_run_report(rep, d.name, "holdout", ck.input.mode, label, r, seconds_since(t0));
      auto tab = outputs.open(fs::path(out_dir) / "table.csv");
      tab << table_csv_header() << '\n' << table_csv_row(label, r) << '\n';
      auto pr = outputs.open(fs::path(out_dir) / "predictions.csv");
      write_predictions(pr, preds);
      outputs.commit();
    }
    return kExitOk;
  }
  bool run = false;
};

struct CrossvalCmd {
  DatasetFlags data;
  ModelFlags model;
  TrainFlags train;
  InputFlags input;
  MetricFlags metrics;
  std::string scheme = "kfold5";
  int k = 5;
  int jobs = 1;
  std::string out_dir;
  std::string label;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("crossval", "Cross-validate the model on a dataset");
    data.add(c);
    model.add(c);
    train.add(c);
    input.add(c);
    metrics.add(c);
    c->add_option("--scheme", scheme, "kfold5, loso or l2so")
        ->check(CLI::IsMember({"kfold5", "kfold", "loso", "l2so"}));
    c->add_option("--k", k, "Folds for kfold")->check(CLI::Range(2, 1000));
    c->add_option("--jobs", jobs, "Folds trained concurrently")->check(CLI::PositiveNumber);
    c->add_option("--out", out_dir, "Output directory")->required();
    c->add_option("--label", label, "Row label for the table (default: model description)");
    c->callback([this] { run = true; });
  }

  int exec(std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset d = data.load();
    const InputOptions io = input.resolve(d.samples);
    const ModelConfig mc = model.config(io.mode);
    const CvScheme sch = parse_scheme(scheme);
    const FoldSpec folds = make_folds(d.samples, sch, train.cfg.seed, k);
    const CvResult r = evaluate_cv(d.samples, folds, model_predictor(mc, train.cfg, io),
                                   metrics.options(), jobs);
    const std::string row = label.empty() ? model_label(mc, io.mode) : label;
    const double wall = seconds_since(t0);

    OutputSet outputs;
    const fs::path dir(out_dir);
    auto rep = outputs.open(dir / "report.txt");
    write_run_report(rep, d.name, std::string(to_string(sch)), io.mode, row, r.pooled, wall);
    auto tab = outputs.open(dir / "table.csv");
    tab << table_csv_header() << '\n' << table_csv_row(row, r.pooled) << '\n';
    auto folds_csv = outputs.open(dir / "folds.csv");
    folds_csv << table_csv_header() << '\n';
    for (std::size_t f = 0; f < r.per_fold.size(); ++f)
      folds_csv << table_csv_row("fold " + std::to_string(f), r.per_fold[f]) << '\n';
    auto pr = outputs.open(dir / "predictions.csv");
    write_predictions(pr, r.predictions);
    for (auto* s : {&rep, &tab, &folds_csv, &pr})
      if (!*s) throw std::runtime_error("failed writing outputs under " + out_dir);
    outputs.commit();

    out << table_text_row(row, r.pooled) << '\n'
        << "folds " << r.folds.folds.size() << ", samples " << r.pooled.n_samples << ", "
        << num(wall) << " s\n";
    return kExitOk;
  }
  bool run = false;
};

struct BaselineCmd {
  DatasetFlags data;
  BaselineConfig cfg;
  MetricFlags metrics;
  std::string method = "all";
  std::size_t downsample = 0;
  std::string out_dir;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("baseline", "Run the classical step counters");
    data.add(c);
    metrics.add(c);
    c->add_option("--method", method, "peak, threshold, autocorr or all")
        ->check(CLI::IsMember({"peak", "threshold", "autocorr", "all"}));
    c->add_option("--smooth-window", cfg.smooth_window_s, "Moving-average window (s)");
    c->add_option("--k", cfg.peak_min_prominence_k, "Threshold in signal standard deviations");
    c->add_option("--min-interval", cfg.min_step_interval_s, "Minimum step interval (s)");
    c->add_option("--cadence-lo", cfg.cadence_lo_hz, "Cadence band lower bound (Hz)");
    c->add_option("--cadence-hi", cfg.cadence_hi_hz, "Cadence band upper bound (Hz)");
    c->add_option("--downsample", downsample, "Decimation factor (0 = auto)");
    c->add_option("--out", out_dir, "Directory for counts.csv and table.csv");
    c->callback([this] { run = true; });
  }

  int exec(std::ostream& out) {
    cfg.validate();
    const Dataset d = data.load();
    InputFlags in;
    in.downsample = downsample;
    const InputOptions io = in.resolve(d.samples);
    std::vector<BaselineMethod> methods;
    if (method == "all")
      methods = {BaselineMethod::kPeak, BaselineMethod::kThreshold, BaselineMethod::kAutocorrelation};
    else
      methods = {parse_baseline_method(method)};

    std::vector<std::vector<double>> counts(methods.size());
    std::vector<std::string> flags;
    std::vector<double> truths;
    for (const auto& s : d.samples) {
      const TimeSeries ts = build_input(s, io);
      truths.push_back(static_cast<double>(s.step_count));
      std::string flag;
      for (std::size_t m = 0; m < methods.size(); ++m) {
        try {
          if (methods[m] == BaselineMethod::kAutocorrelation) {
            const AutocorrResult a = count_autocorrelation(ts, cfg);
            if (a.low_confidence) flag += "autocorr-low-confidence;";
            counts[m].push_back(static_cast<double>(a.count));
          } else {
            counts[m].push_back(static_cast<double>(count_steps(methods[m], ts, cfg)));
          }
        } catch (const BaselineError& e) {
          log_warning("sample '" + s.id + "' " + std::string(to_string(methods[m])) + ": " + e.what());
          flag += std::string(to_string(methods[m])) + "-failed;";
          counts[m].push_back(0.0);
        }
      }
      flags.push_back(flag);
    }

    OutputSet outputs;
    std::ofstream table, per_sample;
    if (!out_dir.empty()) {
      table = outputs.open(fs::path(out_dir) / "table.csv");
      table << table_csv_header() << '\n';
      per_sample = outputs.open(fs::path(out_dir) / "counts.csv");
      per_sample << "id,true";
      for (auto m : methods) per_sample << ',' << to_string(m);
      per_sample << ",flags\n";
      for (std::size_t i = 0; i < d.samples.size(); ++i) {
        per_sample << d.samples[i].id << ',' << num(truths[i]);
        for (const auto& c : counts) per_sample << ',' << num(c[i]);
        per_sample << ',' << flags[i] << '\n';
      }
    }
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const MetricsReport r = compute_metrics(counts[m], truths, metrics.options());
      const std::string label = "baseline-" + std::string(to_string(methods[m]));
      out << table_text_row(label, r) << '\n';
      if (table.is_open()) table << table_csv_row(label, r) << '\n';
    }
    outputs.commit();
    return kExitOk;
  }
  bool run = false;
};

struct ExportAttentionCmd {
  std::string checkpoint;
  DatasetFlags data;
  std::string sample_id;
  std::string out_path;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("export-attention",
                                 "Write per-timestep attention scores and weights for one sample");
    c->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
    data.add(c);
    c->add_option("--sample", sample_id, "Sample id")->required();
    c->add_option("--out", out_path, "Output CSV")->required();
    c->callback([this] { run = true; });
  }

  int exec(std::ostream& out) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    if (!ck.model.use_attention)
      throw std::runtime_error("checkpoint model has no attention layer");
    const Dataset d = data.load();
    const auto it = std::find_if(d.samples.begin(), d.samples.end(),
                                 [&](const SignalSample& s) { return s.id == sample_id; });
    if (it == d.samples.end()) throw std::runtime_error("sample '" + sample_id + "' not found");
    const TimeSeries ts = build_input(*it, ck.input);
    const Prediction p = predict(ck.params, ck.model, ts.channels, true);

    OutputSet outputs;
    auto csv = outputs.open(out_path);
    csv << 't';
    for (const auto& name : ts.channel_names) csv << ',' << name;
    csv << ",score,weight\n";
    char buf[40];
    for (std::size_t t = 0; t < ts.length(); ++t) {
      std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(t) / ts.fs_hz);
      csv << buf;
      for (std::size_t c = 0; c < ts.channels.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", ts.channels(t, c));
        csv << ',' << buf;
      }
      std::snprintf(buf, sizeof buf, "%.17g", p.attention->scores[t]);
      csv << ',' << buf;
      std::snprintf(buf, sizeof buf, "%.17g", p.attention->weights[t]);
      csv << ',' << buf << '\n';
    }
    if (!csv) throw std::runtime_error("failed writing " + out_path);
    outputs.commit();
    out << "sample " << sample_id << ": " << ts.length() << " timesteps, prediction "
        << num(p.value) << ", true " << it->step_count << '\n';
    return kExitOk;
  }
  bool run = false;
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Step counting with a many-to-one attention LSTM", "stepattn"};
  app.require_subcommand(1);
  SynthCmd synth;
  StatsCmd stats;
  ConvertCmd convert;
  TrainCmd train;
  EvalCmd eval;
  CrossvalCmd crossval;
  BaselineCmd baseline;
  ExportAttentionCmd export_attention;
  synth.add(app);
  stats.add(app);
  convert.add(app);
  train.add(app);
  eval.add(app);
  crossval.add(app);
  baseline.add(app);
  export_attention.add(app);

  std::vector<const char*> argv{"stepattn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth.run) return synth.exec(out);
    if (stats.run) return stats.exec(out);
    if (convert.run) return convert.exec(out);
    if (train.run) return train.exec(out);
    if (eval.run) return eval.exec(out);
    if (crossval.run) return crossval.exec(out);
    if (baseline.run) return baseline.exec(out);
    if (export_attention.run) return export_attention.exec(out);
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace stepattn
