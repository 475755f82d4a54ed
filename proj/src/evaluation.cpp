#include "seqft/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "seqft/errors.hpp"

namespace seqft {

int64_t ConfusionMatrix::total() const {
  int64_t total = 0;
  for (const auto& row : counts) total += std::accumulate(row.begin(), row.end(), int64_t{0});
  return total;
}

std::string to_string(BinaryProjection projection) {
  switch (projection) {
    case BinaryProjection::ABNORMAL_VS_NORMAL: return "abnormal_vs_normal";
    case BinaryProjection::TB_VS_CANCER: return "tb_vs_cancer";
    case BinaryProjection::CANCER_VS_REST: return "cancer_vs_rest";
  }
  throw ContractError("unknown binary projection");
}

std::string score_derivation(BinaryProjection projection) {
  switch (projection) {
    case BinaryProjection::ABNORMAL_VS_NORMAL: return "p(tb) + p(cancer)";
    case BinaryProjection::TB_VS_CANCER:
      return "p(cancer) / (p(tb) + p(cancer)), 0.5 when the denominator vanishes";
    case BinaryProjection::CANCER_VS_REST: return "p(cancer)";
  }
  throw ContractError("unknown binary projection");
}

ConfusionMatrix confusion_matrix(const std::vector<int>& true_labels,
                                 const std::vector<int>& predicted_labels, int k,
                                 std::vector<std::string> class_names) {
  if (k < 1) throw ContractError("confusion_matrix needs k >= 1 classes");
  if (true_labels.size() != predicted_labels.size()) {
    throw ContractError("confusion_matrix got " + std::to_string(true_labels.size()) +
                        " true labels and " + std::to_string(predicted_labels.size()) +
                        " predictions");
  }
  if (class_names.empty()) {
    for (int c = 0; c < k; ++c) class_names.push_back("class" + std::to_string(c));
  }
  if (static_cast<int>(class_names.size()) != k) {
    throw ContractError("confusion_matrix got " + std::to_string(class_names.size()) +
                        " class names for k=" + std::to_string(k));
  }
  ConfusionMatrix cm;
  cm.class_names = std::move(class_names);
  cm.counts.assign(static_cast<std::size_t>(k), std::vector<int64_t>(static_cast<std::size_t>(k), 0));
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    const int t = true_labels[i], p = predicted_labels[i];
    if (t < 0 || t >= k || p < 0 || p >= k) {
      throw ContractError("label pair (" + std::to_string(t) + ", " + std::to_string(p) +
                          ") outside 0.." + std::to_string(k - 1));
    }
    ++cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return cm;
}

NormalizedConfusion normalize_confusion(const ConfusionMatrix& cm) {
  NormalizedConfusion out;
  for (const auto& row : cm.counts) {
    const auto sum = static_cast<double>(std::accumulate(row.begin(), row.end(), int64_t{0}));
    out.zero_row.push_back(sum == 0.0);
    std::vector<double> fractions(row.size(), 0.0);
    if (sum > 0.0) {
      for (std::size_t j = 0; j < row.size(); ++j) fractions[j] = static_cast<double>(row[j]) / sum;
    }
    out.rows.push_back(std::move(fractions));
  }
  return out;
}

double accuracy(const ConfusionMatrix& cm) {
  const int64_t total = cm.total();
  if (total == 0) throw ContractError("accuracy of an empty confusion matrix is undefined");
  int64_t trace = 0;
  for (std::size_t i = 0; i < cm.counts.size(); ++i) trace += cm.counts[i][i];
  return static_cast<double>(trace) / static_cast<double>(total);
}

BinaryScores binary_scores(const Tensor& probabilities, const std::vector<int>& true_labels,
                           BinaryProjection projection) {
  if (probabilities.shape().size() != 2 || probabilities.dim(1) != 3) {
    throw EvalError("binary projections need [N x 3] probabilities, got " +
                    shape_to_string(probabilities.shape()));
  }
  const int64_t n = probabilities.dim(0);
  if (static_cast<int64_t>(true_labels.size()) != n) {
    throw ContractError("binary_scores got " + std::to_string(true_labels.size()) +
                        " labels for " + std::to_string(n) + " probability rows");
  }
  const double* p = probabilities.data().data();
  BinaryScores out;
  for (int64_t i = 0; i < n; ++i) {
    const int label = true_labels[static_cast<std::size_t>(i)];
    if (label < 0 || label > 2) {
      throw ContractError("label " + std::to_string(label) + " outside 0..2");
    }
    const double p_tb = p[i * 3 + 1], p_cancer = p[i * 3 + 2];
    switch (projection) {
      case BinaryProjection::ABNORMAL_VS_NORMAL:
        out.scores.push_back(p_tb + p_cancer);
        out.labels.push_back(label != 0 ? 1 : 0);
        break;
      case BinaryProjection::TB_VS_CANCER: {
        if (label == 0) continue;
        const double denom = p_tb + p_cancer;
        out.scores.push_back(denom < 1e-12 ? 0.5 : p_cancer / denom);
        out.labels.push_back(label == 2 ? 1 : 0);
        break;
      }
      case BinaryProjection::CANCER_VS_REST:
        out.scores.push_back(p_cancer);
        out.labels.push_back(label == 2 ? 1 : 0);
        break;
    }
  }
  const auto positives = std::count(out.labels.begin(), out.labels.end(), 1);
  if (positives == 0 || positives == static_cast<int64_t>(out.labels.size())) {
    throw EvalError(to_string(projection) + " leaves " +
                    (positives == 0 ? std::string("no positive") : std::string("no negative")) +
                    " samples; AUC is undefined");
  }
  return out;
}

RocCurve roc_and_auc(const std::vector<double>& scores, const std::vector<int>& binary_labels) {
  if (scores.size() != binary_labels.size()) {
    throw ContractError("roc_and_auc got " + std::to_string(scores.size()) + " scores and " +
                        std::to_string(binary_labels.size()) + " labels");
  }
  int64_t num_pos = 0, num_neg = 0;
  for (int label : binary_labels) {
    if (label == 1) {
      ++num_pos;
    } else if (label == 0) {
      ++num_neg;
    } else {
      throw ContractError("binary label " + std::to_string(label) + " is not 0 or 1");
    }
  }
  if (num_pos == 0 || num_neg == 0) {
    throw EvalError("ROC needs at least one positive and one negative sample");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      if (binary_labels[order[i]] == 1) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    curve.points.push_back({threshold, static_cast<double>(fp) / static_cast<double>(num_neg),
                            static_cast<double>(tp) / static_cast<double>(num_pos)});
  }

  double auc = 0.0;
  for (std::size_t j = 1; j < curve.points.size(); ++j) {
    const RocPoint& a = curve.points[j - 1];
    const RocPoint& b = curve.points[j];
    auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  curve.auc = auc;
  return curve;
}

EvalReport build_report(const Tensor& probabilities, const std::vector<int>& true_labels,
                        const std::vector<int>& predicted_labels,
                        const std::vector<std::string>& class_names) {
  if (class_names.size() != 3) {
    throw EvalError("build_report needs the three-class layout (normal, tb, cancer), got " +
                    std::to_string(class_names.size()) + " classes");
  }
  EvalReport report;
  report.confusion = confusion_matrix(true_labels, predicted_labels, 3, class_names);
  report.normalized = normalize_confusion(report.confusion);
  report.acc = accuracy(report.confusion);
  for (std::size_t c = 0; c < 3; ++c) {
    report.per_class_accuracy.push_back(report.normalized.rows[c][c]);
  }
  for (BinaryProjection projection : kAllProjections) {
    const BinaryScores scored = binary_scores(probabilities, true_labels, projection);
    report.projections.emplace_back(projection, roc_and_auc(scored.scores, scored.labels));
  }
  return report;
}

std::string format_double(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

std::string report_json(const EvalReport& report) {
  nlohmann::json j;
  j["samples"] = report.confusion.total();
  j["accuracy"] = report.acc;
  j["class_names"] = report.confusion.class_names;
  j["confusion"]["counts"] = report.confusion.counts;
  j["confusion"]["normalized"] = report.normalized.rows;
  j["confusion"]["zero_rows"] = report.normalized.zero_row;
  for (std::size_t c = 0; c < report.per_class_accuracy.size(); ++c) {
    j["per_class_accuracy"][report.confusion.class_names[c]] = report.per_class_accuracy[c];
  }
  for (const auto& [projection, curve] : report.projections) {
    const std::string name = to_string(projection);
    j["auc"][name] = curve.auc;
    j["score_derivation"][name] = score_derivation(projection);
    auto& points = j["roc"][name];
    points = nlohmann::json::array();
    for (const RocPoint& point : curve.points) {
      points.push_back({point.fpr, point.tpr});
    }
  }
  return j.dump(2) + "\n";
}

std::string roc_csv(const RocCurve& curve) {
  std::string csv = "threshold,fpr,tpr\n";
  for (const RocPoint& point : curve.points) {
    csv += (std::isinf(point.threshold) ? std::string("inf") : format_double(point.threshold)) +
           "," + format_double(point.fpr) + "," + format_double(point.tpr) + "\n";
  }
  return csv;
}

std::string confusion_csv(const ConfusionMatrix& cm, const NormalizedConfusion& normalized) {
  std::string csv = "section,true_class";
  for (const std::string& name : cm.class_names) csv += "," + name;
  csv += "\n";
  for (std::size_t i = 0; i < cm.counts.size(); ++i) {
    csv += "counts," + cm.class_names[i];
    for (int64_t v : cm.counts[i]) csv += "," + std::to_string(v);
    csv += "\n";
  }
  for (std::size_t i = 0; i < normalized.rows.size(); ++i) {
    csv += "normalized," + cm.class_names[i];
    for (double v : normalized.rows[i]) csv += "," + format_double(v);
    csv += "\n";
  }
  return csv;
}

}  // namespace seqft
