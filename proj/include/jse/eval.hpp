#pragma once

#include "jse/core_types.hpp"
#include "jse/logreg.hpp"

#include <optional>

namespace jse {

/// Accuracies in percent. `average` is the raw overall accuracy,
/// `macro_average` the mean of the four group accuracies.
struct EvalSummary {
  std::array<double, 4> group_acc{};
  double worst_group = 0.0;
  double average = 0.0;
  double macro_average = 0.0;
  std::array<std::size_t, 4> n_per_group{};
};

/// Summary of hard 0/1 predictions against the test labels.
inline EvalSummary summarize_predictions(std::span<const int> predicted, const LabeledEmbeddings& test) {
  if (static_cast<Index>(predicted.size()) != test.size()) throw DataError("summarize_predictions: length mismatch");
  EvalSummary s;
  std::array<std::size_t, 4> correct{};
  std::size_t total_correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto g = static_cast<std::size_t>(test.group()[i] - 1);
    ++s.n_per_group[g];
    if (predicted[i] == test.y_mt()[i]) {
      ++correct[g];
      ++total_correct;
    }
  }
  for (std::size_t g = 0; g < 4; ++g) {
    if (s.n_per_group[g] == 0) throw EmptyGroupError("evaluate: test group " + std::to_string(g + 1) + " is empty");
    s.group_acc[g] = 100.0 * static_cast<double>(correct[g]) / static_cast<double>(s.n_per_group[g]);
  }
  s.worst_group = *std::min_element(s.group_acc.begin(), s.group_acc.end());
  s.macro_average = (s.group_acc[0] + s.group_acc[1] + s.group_acc[2] + s.group_acc[3]) / 4.0;
  s.average = 100.0 * static_cast<double>(total_correct) / static_cast<double>(predicted.size());
  return s;
}

/// Main-task accuracy of `model` on `test` at threshold 0.5, optionally after
/// the right-multiplied d x d transform `projection` (Z * P).
inline EvalSummary evaluate(const LinearModel& model, const LabeledEmbeddings& test,
                            const std::optional<Eigen::MatrixXd>& projection = std::nullopt) {
  const Matrix z = projection ? Matrix(test.z() * *projection) : test.z();
  const Vector a = model.logits(z);
  std::vector<int> pred(static_cast<std::size_t>(a.size()));
  for (Index i = 0; i < a.size(); ++i) pred[static_cast<std::size_t>(i)] = a[i] >= 0.0 ? 1 : 0;
  return summarize_predictions(pred, test);
}

}  // namespace jse
