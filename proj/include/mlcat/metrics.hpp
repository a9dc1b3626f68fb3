#pragma once

// Multi-label evaluation.
//
// Example-based metrics average over posts:
//   F_I   = mean_i 2|P_i ∩ G_i| / (|P_i| + |G_i|)
//   Acc_I = mean_i |P_i ∩ G_i| / |P_i ∪ G_i|
// with 1.0 credit when both sets are empty.
// Label-based metrics: F_macro averages per-label F1 (0 when a label has
// no true positives); F_micro is the F1 of summed TP/FP/FN.

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlcat/schema.hpp"

namespace mlcat {

struct LabelScores {
  double precision = 0, recall = 0, f1 = 0;
  std::size_t support = 0;
};

struct GroupScores {
  std::size_t rows = 0;
  bool below_threshold = false;  // fewer than kMinGroupRows rows
  double f_i = 0, f_macro = 0, acc_i = 0, f_micro = 0;
};

inline constexpr std::size_t kMinGroupRows = 10;

struct MetricsReport {
  double f_i = 0, acc_i = 0, f_macro = 0, f_micro = 0;
  std::vector<LabelScores> per_label;
  std::map<std::size_t, GroupScores> by_label_count;
};

namespace detail {

inline void check_pair(const std::vector<LabelSet>& pred, const std::vector<LabelSet>& gold) {
  if (pred.size() != gold.size())
    throw Error(ErrorKind::dimension, "metrics: " + std::to_string(pred.size()) +
                                          " predictions for " + std::to_string(gold.size()) +
                                          " gold rows");
  if (pred.empty()) throw Error(ErrorKind::empty_input, "metrics: no rows");
}

inline std::size_t intersection_size(const LabelSet& a, const LabelSet& b) {
  std::size_t n = 0;
  for (auto x : a) n += b.count(x);
  return n;
}

inline double f1_from(double tp, double fp, double fn) {
  const double denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2 * tp / denom;
}

}  // namespace detail

inline double example_f1(const std::vector<LabelSet>& pred, const std::vector<LabelSet>& gold) {
  detail::check_pair(pred, gold);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double denom = static_cast<double>(pred[i].size() + gold[i].size());
    s += denom == 0 ? 1.0 : 2.0 * detail::intersection_size(pred[i], gold[i]) / denom;
  }
  return s / static_cast<double>(pred.size());
}

inline double example_accuracy(const std::vector<LabelSet>& pred,
                               const std::vector<LabelSet>& gold) {
  detail::check_pair(pred, gold);
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto inter = detail::intersection_size(pred[i], gold[i]);
    const auto uni = pred[i].size() + gold[i].size() - inter;
    s += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return s / static_cast<double>(pred.size());
}

inline std::vector<LabelScores> per_label_scores(const std::vector<LabelSet>& pred,
                                                 const std::vector<LabelSet>& gold,
                                                 std::size_t num_labels) {
  detail::check_pair(pred, gold);
  std::vector<double> tp(num_labels), fp(num_labels), fn(num_labels);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (auto l : pred[i]) (gold[i].count(l) ? tp : fp).at(l) += 1;
    for (auto l : gold[i])
      if (!pred[i].count(l)) fn.at(l) += 1;
  }
  std::vector<LabelScores> out(num_labels);
  for (std::size_t l = 0; l < num_labels; ++l) {
    out[l].precision = tp[l] + fp[l] == 0 ? 0.0 : tp[l] / (tp[l] + fp[l]);
    out[l].recall = tp[l] + fn[l] == 0 ? 0.0 : tp[l] / (tp[l] + fn[l]);
    out[l].f1 = detail::f1_from(tp[l], fp[l], fn[l]);
    out[l].support = static_cast<std::size_t>(tp[l] + fn[l]);
  }
  return out;
}

enum class Averaging { macro, micro };

inline double label_f1(const std::vector<LabelSet>& pred, const std::vector<LabelSet>& gold,
                       std::size_t num_labels, Averaging mode) {
  detail::check_pair(pred, gold);
  if (mode == Averaging::macro) {
    auto scores = per_label_scores(pred, gold, num_labels);
    double s = 0;
    for (auto& sc : scores) s += sc.f1;
    return num_labels == 0 ? 0.0 : s / static_cast<double>(num_labels);
  }
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto inter = static_cast<double>(detail::intersection_size(pred[i], gold[i]));
    tp += inter;
    fp += static_cast<double>(pred[i].size()) - inter;
    fn += static_cast<double>(gold[i].size()) - inter;
  }
  return detail::f1_from(tp, fp, fn);
}

// Groups rows by their number of gold labels and scores each group.
inline std::map<std::size_t, GroupScores> breakdown_by_label_count(
    const std::vector<LabelSet>& pred, const std::vector<LabelSet>& gold,
    std::size_t num_labels) {
  detail::check_pair(pred, gold);
  std::map<std::size_t, std::pair<std::vector<LabelSet>, std::vector<LabelSet>>> groups;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto& g = groups[gold[i].size()];
    g.first.push_back(pred[i]);
    g.second.push_back(gold[i]);
  }
  std::map<std::size_t, GroupScores> out;
  for (auto& [k, rows] : groups) {
    GroupScores s;
    s.rows = rows.first.size();
    s.below_threshold = s.rows < kMinGroupRows;
    s.f_i = example_f1(rows.first, rows.second);
    s.acc_i = example_accuracy(rows.first, rows.second);
    s.f_macro = label_f1(rows.first, rows.second, num_labels, Averaging::macro);
    s.f_micro = label_f1(rows.first, rows.second, num_labels, Averaging::micro);
    out[k] = s;
  }
  return out;
}

inline MetricsReport evaluate_predictions(const std::vector<LabelSet>& pred,
                                          const std::vector<LabelSet>& gold,
                                          std::size_t num_labels) {
  MetricsReport r;
  r.f_i = example_f1(pred, gold);
  r.acc_i = example_accuracy(pred, gold);
  r.f_macro = label_f1(pred, gold, num_labels, Averaging::macro);
  r.f_micro = label_f1(pred, gold, num_labels, Averaging::micro);
  r.per_label = per_label_scores(pred, gold, num_labels);
  r.by_label_count = breakdown_by_label_count(pred, gold, num_labels);
  return r;
}

// Element-wise mean of several reports (per-run averaging).
inline MetricsReport average_reports(const std::vector<MetricsReport>& runs) {
  if (runs.empty()) throw Error(ErrorKind::empty_input, "no reports to average");
  MetricsReport avg;
  const double n = static_cast<double>(runs.size());
  avg.per_label.resize(runs[0].per_label.size());
  std::map<std::size_t, std::size_t> seen;
  for (auto& r : runs) {
    avg.f_i += r.f_i / n;
    avg.acc_i += r.acc_i / n;
    avg.f_macro += r.f_macro / n;
    avg.f_micro += r.f_micro / n;
    for (std::size_t l = 0; l < avg.per_label.size() && l < r.per_label.size(); ++l) {
      avg.per_label[l].precision += r.per_label[l].precision / n;
      avg.per_label[l].recall += r.per_label[l].recall / n;
      avg.per_label[l].f1 += r.per_label[l].f1 / n;
      avg.per_label[l].support = r.per_label[l].support;
    }
    for (auto& [k, g] : r.by_label_count) {
      auto& a = avg.by_label_count[k];
      a.rows = g.rows;
      a.below_threshold = g.below_threshold;
      a.f_i += g.f_i;
      a.acc_i += g.acc_i;
      a.f_macro += g.f_macro;
      a.f_micro += g.f_micro;
      ++seen[k];
    }
  }
  for (auto& [k, a] : avg.by_label_count) {
    const double c = static_cast<double>(seen[k]);
    a.f_i /= c;
    a.acc_i /= c;
    a.f_macro /= c;
    a.f_micro /= c;
  }
  return avg;
}

// Chance-corrected agreement of two binary vectors. When chance agreement
// is 1 (both raters constant), identical vectors give 1 and differing ones 0.
inline double cohens_kappa(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size())
    throw Error(ErrorKind::dimension, "cohens_kappa: vectors of different length");
  if (a.empty()) throw Error(ErrorKind::empty_input, "cohens_kappa: empty vectors");
  const double n = static_cast<double>(a.size());
  double agree = 0, pa = 0, pb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    agree += x == y;
    pa += x;
    pb += y;
  }
  const double po = agree / n;
  pa /= n;
  pb /= n;
  const double pe = pa * pb + (1 - pa) * (1 - pb);
  if (pe == 1.0) return po == 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1 - pe);
}

// Average of per-category kappas over the columns of two label-set lists.
inline double mean_category_kappa(const std::vector<LabelSet>& a, const std::vector<LabelSet>& b,
                                  std::size_t num_labels, std::vector<double>* per_category = nullptr) {
  detail::check_pair(a, b);
  if (num_labels == 0) throw Error(ErrorKind::empty_input, "mean_category_kappa: no categories");
  double s = 0;
  if (per_category) per_category->clear();
  for (std::size_t l = 0; l < num_labels; ++l) {
    std::vector<std::uint8_t> x(a.size()), y(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      x[i] = a[i].count(l) > 0;
      y[i] = b[i].count(l) > 0;
    }
    const double k = cohens_kappa(x, y);
    if (per_category) per_category->push_back(k);
    s += k;
  }
  return s / static_cast<double>(num_labels);
}

// Line-oriented key=value rendering.
inline std::string to_key_value(const MetricsReport& r,
                                const std::vector<std::string>& label_names = {}) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "F_I=" << r.f_i << "\nF_macro=" << r.f_macro << "\nAcc_I=" << r.acc_i
     << "\nF_micro=" << r.f_micro << '\n';
  for (std::size_t l = 0; l < r.per_label.size(); ++l) {
    const std::string name = l < label_names.size() ? label_names[l] : std::to_string(l);
    os << "label[" << name << "].precision=" << r.per_label[l].precision << '\n'
       << "label[" << name << "].recall=" << r.per_label[l].recall << '\n'
       << "label[" << name << "].f1=" << r.per_label[l].f1 << '\n'
       << "label[" << name << "].support=" << r.per_label[l].support << '\n';
  }
  for (auto& [k, g] : r.by_label_count) {
    const std::string p = "labels_per_post[" + std::to_string(k) + "].";
    os << p << "rows=" << g.rows << '\n'
       << p << "below_threshold=" << (g.below_threshold ? 1 : 0) << '\n'
       << p << "F_I=" << g.f_i << '\n'
       << p << "F_macro=" << g.f_macro << '\n'
       << p << "Acc_I=" << g.acc_i << '\n'
       << p << "F_micro=" << g.f_micro << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const MetricsReport& r,
                              const std::vector<std::string>& label_names = {}) {
  nlohmann::json j;
  j["F_I"] = r.f_i;
  j["F_macro"] = r.f_macro;
  j["Acc_I"] = r.acc_i;
  j["F_micro"] = r.f_micro;
  j["per_label"] = nlohmann::json::array();
  for (std::size_t l = 0; l < r.per_label.size(); ++l) {
    auto& s = r.per_label[l];
    j["per_label"].push_back({{"label", l < label_names.size() ? label_names[l] : std::to_string(l)},
                              {"precision", s.precision},
                              {"recall", s.recall},
                              {"f1", s.f1},
                              {"support", s.support}});
  }
  j["by_label_count"] = nlohmann::json::array();
  for (auto& [k, g] : r.by_label_count)
    j["by_label_count"].push_back({{"labels_per_post", k},
                                   {"rows", g.rows},
                                   {"below_threshold", g.below_threshold},
                                   {"F_I", g.f_i},
                                   {"F_macro", g.f_macro},
                                   {"Acc_I", g.acc_i},
                                   {"F_micro", g.f_micro}});
  return j;
}

}  // namespace mlcat
