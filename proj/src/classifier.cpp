#include "ctxsent/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "ctxsent/digest.hpp"
#include "ctxsent/parallel.hpp"

namespace ctxsent {

void to_json(Json& j, const ClassifierOutput& o) {
  j = Json{{"sample_id", o.sample_id},
           {"probs", o.dist},
           {"conditioned_on", o.conditioned_on ? Json(*o.conditioned_on) : Json(nullptr)}};
  if (o.raw) {
    j["raw"] = {{"loglik", o.raw->loglik}, {"normalization", to_string(o.raw->normalization)}};
  }
}

void from_json(const Json& j, ClassifierOutput& o) {
  o.sample_id = j.at("sample_id").get<std::string>();
  o.dist = j.at("probs").get<PolarityDistribution>();
  if (auto it = j.find("conditioned_on"); it != j.end() && !it->is_null()) {
    o.conditioned_on = it->get<std::string>();
  } else {
    o.conditioned_on.reset();
  }
  if (auto it = j.find("raw"); it != j.end() && !it->is_null()) {
    ChoiceScores raw;
    const auto& ll = it->at("loglik");
    if (!ll.is_array() || ll.size() != kNumPolarities) throw ValidationError("raw.loglik must have 3 entries");
    for (std::size_t i = 0; i < kNumPolarities; ++i) raw.loglik[i] = ll.at(i).get<double>();
    raw.normalization = parse_normalization(it->value("normalization", std::string("total")));
    o.raw = raw;
  } else {
    o.raw.reset();
  }
}

PolarityDistribution softmax(const std::array<double, kNumPolarities>& scores) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("softmax input must be finite");
  }
  const double top = *std::max_element(scores.begin(), scores.end());
  Probs weights{};
  for (std::size_t i = 0; i < kNumPolarities; ++i) weights[i] = std::exp(scores[i] - top);
  return PolarityDistribution::normalize(weights);
}

namespace {

[[noreturn]] void rethrow_for_sample(const Error& e, const std::string& sample_id) {
  const std::string message = "sample " + sample_id + ": " + e.what();
  switch (e.kind()) {
    case ErrorKind::Backend:
      throw BackendError(message, static_cast<const BackendError&>(e).status());
    case ErrorKind::Capability:
      throw CapabilityError(message);
    case ErrorKind::Validation:
      throw ValidationError(message);
    case ErrorKind::Config:
      throw ConfigError(message);
    default:
      throw Error(e.kind(), message);
  }
}

}  // namespace

ClassifierOutput predict(Backend& backend, const Sample& sample, const ClassifierOptions& options,
                         const ContextRecord* context) {
  try {
    const auto instruction = render_task_instruction(
        sample, options.level, context ? std::optional<std::string>(context->text) : std::nullopt,
        options.wording, backend.config().image_token);
    ScoreRequest request;
    request.prompt = instruction.prompt;
    request.choices = instruction.choices;
    request.image = sample.image;
    request.hint.sample_key = sample.id;
    request.hint.gold = sample.gold;
    if (context) request.hint.context_key = sha256_hex(context->text);

    ClassifierOutput out;
    out.sample_id = sample.id;
    out.raw = backend.score_choices(request);
    out.dist = softmax(out.raw->loglik);
    if (context) out.conditioned_on = context->knowledge_type;
    return out;
  } catch (const Error& e) {
    rethrow_for_sample(e, sample.id);
  }
}

Json to_json(const std::vector<BatchFailure>& failures) {
  Json rows = Json::array();
  for (const auto& f : failures) {
    rows.push_back({{"sample_id", f.sample_id}, {"kind", to_string(f.kind)}, {"message", f.message}});
  }
  return Json{{"failed", failures.size()}, {"failures", rows}};
}

BatchResult predict_batch(Backend& backend, const std::vector<Sample>& samples,
                          const ClassifierOptions& options,
                          const std::map<std::string, ContextRecord>* contexts) {
  std::vector<std::optional<ClassifierOutput>> slots(samples.size());
  std::vector<std::optional<BatchFailure>> errors(samples.size());
  parallel_for(samples.size(), backend.config().concurrency_limit, [&](std::size_t i) {
    const auto& sample = samples[i];
    const ContextRecord* context = nullptr;
    if (contexts) {
      if (auto it = contexts->find(sample.id); it != contexts->end()) context = &it->second;
    }
    try {
      slots[i] = predict(backend, sample, options, context);
    } catch (const Error& e) {
      errors[i] = BatchFailure{sample.id, e.kind(), e.what()};
    } catch (const std::exception& e) {
      errors[i] = BatchFailure{sample.id, ErrorKind::Backend, e.what()};
    }
  });
  BatchResult result;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (slots[i]) result.outputs.push_back(std::move(*slots[i]));
    if (errors[i]) result.failures.push_back(std::move(*errors[i]));
  }
  return result;
}

}  // namespace ctxsent
