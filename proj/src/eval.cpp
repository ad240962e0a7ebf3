#include "stepattn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "stepattn/rng.hpp"

namespace stepattn {

namespace {

void require_positive_truth(double truth) {
  if (!(truth > 0.0))
    throw std::invalid_argument("metric undefined for non-positive true count " +
                                std::to_string(truth));
}

void require_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("metrics: " + std::to_string(a.size()) + " predictions vs " +
                                std::to_string(b.size()) + " labels");
}

struct MeanStd {
  double mean = 0.0, std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(v.size()));
  return r;
}

}  // namespace

double error_rate(double pred, double truth) {
  require_positive_truth(truth);
  return (pred - truth) / truth * 100.0;
}

double rca(double pred, double truth) {
  require_positive_truth(truth);
  return pred / truth;
}

double acc(double pred, double truth) {
  require_positive_truth(truth);
  return (1.0 - std::abs(pred - truth) / truth) * 100.0;
}

UnderOver under_over_count(std::span<const double> preds, std::span<const double> truths,
                           CountNormalization mode) {
  require_same_length(preds, truths);
  UnderOver r;
  if (preds.empty()) return r;
  if (mode == CountNormalization::kSteps) {
    double total = 0.0, under = 0.0, over = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      require_positive_truth(truths[i]);
      total += truths[i];
      under += std::max(0.0, truths[i] - preds[i]);
      over += std::max(0.0, preds[i] - truths[i]);
    }
    r.uc = under / total * 100.0;
    r.oc = over / total * 100.0;
  } else {
    std::size_t under = 0, over = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] < truths[i]) ++under;
      if (preds[i] > truths[i]) ++over;
    }
    const auto n = static_cast<double>(preds.size());
    r.uc = static_cast<double>(under) / n * 100.0;
    r.oc = static_cast<double>(over) / n * 100.0;
  }
  return r;
}

MetricsReport compute_metrics(std::span<const double> preds_in, std::span<const double> truths,
                              const MetricOptions& options) {
  require_same_length(preds_in, truths);
  std::vector<double> preds(preds_in.begin(), preds_in.end());
  if (options.round_predictions)
    for (double& p : preds) p = std::round(p);

  MetricsReport r;
  r.n_samples = preds.size();
  if (preds.empty()) return r;
  std::vector<double> er, ra, ac;
  double abs_total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    er.push_back(error_rate(preds[i], truths[i]));
    ra.push_back(rca(preds[i], truths[i]));
    ac.push_back(acc(preds[i], truths[i]));
    abs_total += std::abs(preds[i] - truths[i]);
  }
  r.mae = abs_total / static_cast<double>(preds.size());
  const auto e = mean_std(er), q = mean_std(ra), a = mean_std(ac);
  r.er_mean = e.mean;
  r.er_std = e.std;
  r.rca_mean = q.mean;
  r.rca_std = q.std;
  r.acc_mean = a.mean;
  r.acc_std = a.std;
  const UnderOver uo = under_over_count(preds, truths, options.count_normalization);
  r.uc = uo.uc;
  r.oc = uo.oc;
  return r;
}

// ---------------------------------------------------------------------------------------------

std::string_view to_string(CvScheme s) {
  switch (s) {
    case CvScheme::kKFold: return "kfold";
    case CvScheme::kLeaveOneSubjectOut: return "loso";
    case CvScheme::kLeaveTwoSubjectsOut: return "l2so";
  }
  return "kfold";
}

CvScheme parse_scheme(std::string_view s) {
  if (s == "kfold" || s == "kfold5") return CvScheme::kKFold;
  if (s == "loso") return CvScheme::kLeaveOneSubjectOut;
  if (s == "l2so") return CvScheme::kLeaveTwoSubjectsOut;
  throw std::invalid_argument("unknown scheme '" + std::string(s) + "' (expected kfold5, loso, l2so)");
}

namespace {

Fold complement(const std::vector<std::size_t>& test, std::size_t n) {
  Fold f;
  f.test = test;
  std::sort(f.test.begin(), f.test.end());
  std::vector<bool> in_test(n, false);
  for (std::size_t i : f.test) in_test[i] = true;
  for (std::size_t i = 0; i < n; ++i)
    if (!in_test[i]) f.train.push_back(i);
  return f;
}

}  // namespace

FoldSpec make_folds(const std::vector<SignalSample>& samples, CvScheme scheme, std::uint64_t seed,
                    int k) {
  FoldSpec spec;
  spec.scheme = scheme;
  const std::size_t n = samples.size();
  if (scheme == CvScheme::kKFold) {
    if (k < 2) throw std::invalid_argument("make_folds: k must be >= 2");
    if (n < static_cast<std::size_t>(k))
      throw std::invalid_argument("make_folds: " + std::to_string(n) + " samples cannot form " +
                                  std::to_string(k) + " folds");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const std::size_t base = n / static_cast<std::size_t>(k);
    const std::size_t extra = n % static_cast<std::size_t>(k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < static_cast<std::size_t>(k); ++f) {
      const std::size_t size = base + (f < extra ? 1 : 0);
      spec.folds.push_back(
          complement({order.begin() + static_cast<std::ptrdiff_t>(pos),
                      order.begin() + static_cast<std::ptrdiff_t>(pos + size)}, n));
      pos += size;
    }
    return spec;
  }

  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < n; ++i) {
    if (samples[i].subject.empty())
      throw std::invalid_argument("make_folds: sample '" + samples[i].id + "' has no subject");
    by_subject[samples[i].subject].push_back(i);
  }
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [subject, idx] : by_subject) groups.push_back(idx);

  if (scheme == CvScheme::kLeaveOneSubjectOut) {
    if (groups.size() < 2)
      throw std::invalid_argument("make_folds: leave-one-subject-out needs >= 2 subjects, got " +
                                  std::to_string(groups.size()));
    for (const auto& g : groups) spec.folds.push_back(complement(g, n));
    return spec;
  }

  if (groups.size() < 3)
    throw std::invalid_argument("make_folds: leave-two-subjects-out needs >= 3 subjects, got " +
                                std::to_string(groups.size()));
  for (std::size_t g = 0; g < groups.size(); g += 2) {
    std::vector<std::size_t> test = groups[g];
    if (g + 1 < groups.size()) test.insert(test.end(), groups[g + 1].begin(), groups[g + 1].end());
    spec.folds.push_back(complement(test, n));
  }
  return spec;
}

void validate_folds(const FoldSpec& folds, const std::vector<SignalSample>& samples) {
  std::vector<int> seen(samples.size(), 0);
  for (std::size_t f = 0; f < folds.folds.size(); ++f) {
    const Fold& fold = folds.folds[f];
    std::set<std::string> test_subjects;
    for (std::size_t i : fold.test) {
      if (i >= samples.size()) throw std::logic_error("fold index out of range");
      ++seen[i];
      test_subjects.insert(samples[i].subject);
    }
    if (folds.scheme != CvScheme::kKFold)
      for (std::size_t i : fold.train)
        if (test_subjects.count(samples[i].subject))
          throw std::logic_error("fold " + std::to_string(f) + ": subject '" + samples[i].subject +
                                 "' on both sides");
    if (fold.train.size() + fold.test.size() != samples.size())
      throw std::logic_error("fold " + std::to_string(f) + ": train/test do not cover the dataset");
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (seen[i] != 1)
      throw std::logic_error("sample '" + samples[i].id + "' appears in " +
                             std::to_string(seen[i]) + " test sets");
}

FoldPredictor model_predictor(const ModelConfig& model_config, const TrainConfig& train_config,
                              const InputOptions& input) {
  return [=](const std::vector<SignalSample>& train, const std::vector<SignalSample>& test,
             std::size_t) {
    ModelParams init = init_params(model_config, train_config.seed);
    const FitResult fitted = fit(model_config, std::move(init), train, train_config, input);
    return predict_all(fitted.params, model_config, prepare(test, input));
  };
}

CvResult evaluate_cv(const std::vector<SignalSample>& samples, const FoldSpec& folds,
                     const FoldPredictor& predictor, const MetricOptions& options, int jobs) {
  if (folds.folds.size() < 2) throw std::invalid_argument("evaluate_cv: need at least 2 folds");
  validate_folds(folds, samples);

  const std::size_t nf = folds.folds.size();
  std::vector<std::vector<double>> fold_preds(nf);
  std::vector<std::exception_ptr> errors(nf);
  auto run = [&](std::size_t f) {
    try {
      std::vector<SignalSample> train, test;
      for (std::size_t i : folds.folds[f].train) train.push_back(samples[i]);
      for (std::size_t i : folds.folds[f].test) test.push_back(samples[i]);
      fold_preds[f] = predictor(train, test, f);
      if (fold_preds[f].size() != test.size())
        throw std::logic_error("predictor returned " + std::to_string(fold_preds[f].size()) +
                               " predictions for " + std::to_string(test.size()) + " samples");
    } catch (...) {
      errors[f] = std::current_exception();
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, nf);
  if (workers == 1) {
    for (std::size_t f = 0; f < nf; ++f) run(f);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t f = w; f < nf; f += workers) run(f);
      });
    for (auto& t : pool) t.join();
  }
  for (std::size_t f = 0; f < nf; ++f) {
    if (!errors[f]) continue;
    try {
      std::rethrow_exception(errors[f]);
    } catch (const std::exception& e) {
      throw std::runtime_error("fold " + std::to_string(f) + ": " + e.what());
    }
  }

  CvResult result;
  result.folds = folds;
  result.predictions.resize(samples.size());
  for (std::size_t f = 0; f < nf; ++f) {
    std::vector<double> truths;
    const auto& test = folds.folds[f].test;
    for (std::size_t j = 0; j < test.size(); ++j) {
      const SignalSample& s = samples[test[j]];
      result.predictions[test[j]] = {s.id, s.subject, static_cast<double>(s.step_count),
                                     fold_preds[f][j], f};
      truths.push_back(static_cast<double>(s.step_count));
    }
    result.per_fold.push_back(compute_metrics(fold_preds[f], truths, options));
  }
  std::vector<double> preds, truths;
  for (const auto& p : result.predictions) {
    preds.push_back(p.pred);
    truths.push_back(p.truth);
  }
  result.pooled = compute_metrics(preds, truths, options);
  return result;
}

CvResult evaluate_cv(const std::vector<SignalSample>& samples, CvScheme scheme,
                     const ModelConfig& model_config, const TrainConfig& train_config,
                     const InputOptions& input, const MetricOptions& options, int jobs) {
  const FoldSpec folds = make_folds(samples, scheme, train_config.seed);
  return evaluate_cv(samples, folds, model_predictor(model_config, train_config, input), options,
                     jobs);
}

// ---------------------------------------------------------------------------------------------

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  if (a.size() < 2) return 0.0;
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const auto ma = mean_std(ra), mb = mean_std(rb);
  if (ma.std == 0.0 || mb.std == 0.0) return 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) cov += (ra[i] - ma.mean) * (rb[i] - mb.mean);
  cov /= static_cast<double>(ra.size());
  return cov / (ma.std * mb.std);
}

std::size_t count_local_maxima(std::span<const double> v) {
  std::size_t count = 0;
  std::size_t i = 1;
  while (i + 1 < v.size()) {
    if (v[i] > v[i - 1]) {
      std::size_t j = i;
      while (j + 1 < v.size() && v[j + 1] == v[i]) ++j;
      if (j + 1 < v.size() && v[j + 1] < v[i]) ++count;
      i = j + 1;
    } else {
      ++i;
    }
  }
  return count;
}

// ---------------------------------------------------------------------------------------------

namespace {

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << "n_samples " << r.n_samples << '\n'
     << "mae " << fmt(r.mae) << '\n'
     << "uc " << fmt(r.uc) << '\n'
     << "oc " << fmt(r.oc) << '\n'
     << "er_mean " << fmt(r.er_mean) << '\n'
     << "er_std " << fmt(r.er_std) << '\n'
     << "rca_mean " << fmt(r.rca_mean) << '\n'
     << "rca_std " << fmt(r.rca_std) << '\n'
     << "acc_mean " << fmt(r.acc_mean) << '\n'
     << "acc_std " << fmt(r.acc_std) << '\n';
  return os.str();
}

std::string model_label(const ModelConfig& config, InputMode mode) {
  std::string label = "LSTM-" + std::to_string(config.num_layers) + "x" +
                      std::to_string(config.hidden_size) + "-" + std::string(to_string(mode));
  if (config.use_attention) label += " (attention)";
  return label;
}

std::string table_csv_header() {
  return "model,mae,uc,oc,er_mean,er_std,rca_mean,rca_std,acc_mean,acc_std,acc_mean_frac,"
         "acc_std_frac,n_samples";
}

std::string table_csv_row(const std::string& label, const MetricsReport& r) {
  std::ostringstream os;
  os << '"' << label << '"' << ',' << fmt(r.mae) << ',' << fmt(r.uc) << ',' << fmt(r.oc) << ','
     << fmt(r.er_mean) << ',' << fmt(r.er_std) << ',' << fmt(r.rca_mean) << ',' << fmt(r.rca_std)
     << ',' << fmt(r.acc_mean) << ',' << fmt(r.acc_std) << ',' << fmt(r.acc_mean / 100.0) << ','
     << fmt(r.acc_std / 100.0) << ',' << r.n_samples;
  return os.str();
}

std::string table_text_row(const std::string& label, const MetricsReport& r) {
  std::ostringstream os;
  os << label << " | MAE " << fmt(r.mae, 2) << " | UC, OC " << fmt(r.uc, 2) << ", " << fmt(r.oc, 2)
     << " | ER " << fmt(r.er_mean, 2) << "+-" << fmt(r.er_std, 2) << " | RCA "
     << fmt(r.rca_mean, 2) << "+-" << fmt(r.rca_std, 2) << " | ACC " << fmt(r.acc_mean / 100.0, 2)
     << "+-" << fmt(r.acc_std / 100.0, 2);
  return os.str();
}

}  // namespace stepattn
