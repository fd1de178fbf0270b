#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctxsent/backend.hpp"
#include "ctxsent/datamodel.hpp"
#include "ctxsent/error.hpp"
#include "ctxsent/prompts.hpp"

namespace ctxsent {

struct ClassifierOutput {
  std::string sample_id;
  PolarityDistribution dist;
  /// Absent for distributions imported from external classifiers.
  std::optional<ChoiceScores> raw;
  /// Knowledge type of the context the prediction was conditioned on.
  std::optional<std::string> conditioned_on;

  bool operator==(const ClassifierOutput&) const = default;
};

/// Import/export format: {sample_id, probs:[3], conditioned_on, raw?}.
void to_json(Json& j, const ClassifierOutput& o);
void from_json(const Json& j, ClassifierOutput& o);

/// Max-subtracted softmax at temperature 1. Throws ValidationError on
/// non-finite input.
PolarityDistribution softmax(const std::array<double, kNumPolarities>& scores);

struct ClassifierOptions {
  TaskLevel level = TaskLevel::Sentence;
  InstructionTemplate wording;
};

ClassifierOutput predict(Backend& backend, const Sample& sample, const ClassifierOptions& options,
                         const ContextRecord* context = nullptr);

struct BatchFailure {
  std::string sample_id;
  ErrorKind kind = ErrorKind::Backend;
  std::string message;
};

struct BatchResult {
  /// Successful predictions, in input order.
  std::vector<ClassifierOutput> outputs;
  std::vector<BatchFailure> failures;
};

Json to_json(const std::vector<BatchFailure>& failures);

/// Predicts every sample with at most backend.config().concurrency_limit
/// requests in flight. `contexts` maps sample id to its context; samples
/// without an entry are predicted without context.
BatchResult predict_batch(Backend& backend, const std::vector<Sample>& samples,
                          const ClassifierOptions& options,
                          const std::map<std::string, ContextRecord>* contexts = nullptr);

}  // namespace ctxsent
