#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stepattn/model.hpp"
#include "stepattn/pipeline.hpp"
#include "stepattn/sample.hpp"
#include "stepattn/train.hpp"

namespace stepattn {

// Per-sample metrics. `truth` must be positive.

/// Signed percentage error (pred - truth) / truth * 100.
double error_rate(double pred, double truth);
/// pred / truth; below 1 is an undercount, above 1 an overcount.
double rca(double pred, double truth);
/// (1 - |pred - truth| / truth) * 100. Negative for errors larger than the truth.
double acc(double pred, double truth);

/// How under/overcount percentages are normalized.
///  kSteps:   sum max(0, truth - pred) / sum truth * 100 (and the mirror for overcount).
///  kSamples: fraction of samples with negative (positive) error * 100.
enum class CountNormalization { kSteps, kSamples };

struct UnderOver {
  double uc = 0.0;
  double oc = 0.0;
};

UnderOver under_over_count(std::span<const double> preds, std::span<const double> truths,
                           CountNormalization mode = CountNormalization::kSteps);

struct MetricOptions {
  CountNormalization count_normalization = CountNormalization::kSteps;
  bool round_predictions = false;
};

/// Pooled metrics. Means and standard deviations are over samples; standard deviations are
/// population (divide by n). ACC is on the percentage scale.
struct MetricsReport {
  double mae = 0.0;
  double er_mean = 0.0, er_std = 0.0;
  double rca_mean = 0.0, rca_std = 0.0;
  double uc = 0.0, oc = 0.0;
  double acc_mean = 0.0, acc_std = 0.0;
  std::size_t n_samples = 0;
};

MetricsReport compute_metrics(std::span<const double> preds, std::span<const double> truths,
                              const MetricOptions& options = {});

enum class CvScheme { kKFold, kLeaveOneSubjectOut, kLeaveTwoSubjectsOut };

std::string_view to_string(CvScheme s);
/// Accepts kfold / kfold5, loso, l2so.
CvScheme parse_scheme(std::string_view s);

struct Fold {
  std::vector<std::size_t> train;  // indices into the sample list
  std::vector<std::size_t> test;
};

struct FoldSpec {
  CvScheme scheme = CvScheme::kKFold;
  std::vector<Fold> folds;
};

/// kfold: seeded shuffle, then k parts whose sizes differ by at most one (larger parts first).
/// loso: one fold per subject, subjects in sorted order.
/// l2so: subjects sorted, consecutive pairs; with an odd count the last fold holds the single
/// leftover subject.
FoldSpec make_folds(const std::vector<SignalSample>& samples, CvScheme scheme, std::uint64_t seed,
                    int k = 5);

/// Throws std::logic_error if the test sets are not a partition of [0, n) or, for subject
/// schemes, if a subject appears on both sides of a fold.
void validate_folds(const FoldSpec& folds, const std::vector<SignalSample>& samples);

/// Trains on `train` and predicts every sample of `test`.
using FoldPredictor = std::function<std::vector<double>(
    const std::vector<SignalSample>& train, const std::vector<SignalSample>& test, std::size_t fold)>;

/// Fresh parameters per fold from the same init seed and hyperparameters.
FoldPredictor model_predictor(const ModelConfig& model_config, const TrainConfig& train_config,
                              const InputOptions& input);

struct SamplePrediction {
  std::string id;
  std::string subject;
  double truth = 0.0;
  double pred = 0.0;
  std::size_t fold = 0;
};

struct CvResult {
  FoldSpec folds;
  MetricsReport pooled;
  std::vector<MetricsReport> per_fold;
  std::vector<SamplePrediction> predictions;  // in sample order
};

/// Runs every fold (up to `jobs` concurrently), pools predictions over folds and computes the
/// metrics on the pooled set. Errors are rethrown with the fold index.
CvResult evaluate_cv(const std::vector<SignalSample>& samples, const FoldSpec& folds,
                     const FoldPredictor& predictor, const MetricOptions& options = {},
                     int jobs = 1);

CvResult evaluate_cv(const std::vector<SignalSample>& samples, CvScheme scheme,
                     const ModelConfig& model_config, const TrainConfig& train_config,
                     const InputOptions& input, const MetricOptions& options = {}, int jobs = 1);

/// Spearman rank correlation (ties receive average ranks). 0 when either side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

/// Interior local maxima; a flat top bounded by lower neighbours counts once.
std::size_t count_local_maxima(std::span<const double> v);

// Report rendering.

/// One `key value` record per metric.
std::string format_report(const MetricsReport& r);
/// Row label like "LSTM-2x128-l2 (attention)".
std::string model_label(const ModelConfig& config, InputMode mode);
std::string table_csv_header();
/// CSV row in the column order of table_csv_header(); ACC is written on both scales.
std::string table_csv_row(const std::string& label, const MetricsReport& r);
/// Human-readable "MAE | UC, OC | ER | RCA | ACC" row with ACC on the fractional scale.
std::string table_text_row(const std::string& label, const MetricsReport& r);

}  // namespace stepattn
