#include "ctxsent/saliency.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ctxsent/error.hpp"

namespace ctxsent {

HeadTensor HeadTensor::from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw ValidationError("tensor must be a non-empty [H][T][T] array");
  const std::size_t heads = j.size();
  const std::size_t tokens = j.front().is_array() ? j.front().size() : 0;
  if (tokens == 0) throw ValidationError("tensor head must be a non-empty T x T array");
  HeadTensor t(heads, tokens);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto& head = j[h];
    if (!head.is_array() || head.size() != tokens) throw ValidationError("ragged tensor: head rows differ");
    for (std::size_t r = 0; r < tokens; ++r) {
      const auto& row = head[r];
      if (!row.is_array() || row.size() != tokens) throw ValidationError("tensor rows must have length T");
      for (std::size_t c = 0; c < tokens; ++c) t(h, r, c) = row[c].get<double>();
    }
  }
  return t;
}

void validate(const SaliencyDump& dump) {
  if (dump.layers.empty()) throw ValidationError("saliency dump has no layers");
  const std::size_t tokens = dump.layers.front().attention.tokens();
  for (std::size_t l = 0; l < dump.layers.size(); ++l) {
    const auto& layer = dump.layers[l];
    if (layer.attention.heads() != layer.grad.heads() || layer.attention.tokens() != layer.grad.tokens()) {
      throw ValidationError("layer " + std::to_string(l) + ": attention and grad shapes differ");
    }
    if (layer.attention.tokens() != tokens) {
      throw ValidationError("layer " + std::to_string(l) + ": token count differs from layer 0");
    }
  }
  if (dump.context_span.empty()) throw ValidationError("context span is empty");
  if (dump.input_span.empty()) throw ValidationError("input span is empty");
  if (dump.prediction_position >= tokens) throw ValidationError("prediction position out of range");
  std::set<std::size_t> context;
  for (auto i : dump.context_span) {
    if (i >= tokens) throw ValidationError("context span index out of range: " + std::to_string(i));
    context.insert(i);
  }
  for (auto i : dump.input_span) {
    if (i >= tokens) throw ValidationError("input span index out of range: " + std::to_string(i));
    if (context.count(i)) throw ValidationError("spans overlap at index " + std::to_string(i));
  }
}

SaliencyDump saliency_dump_from_json(const Json& j) {
  SaliencyDump dump;
  try {
    dump.model_id = j.value("model_id", std::string());
    dump.sample_id = j.value("sample_id", std::string());
    for (const auto& layer : j.at("layers")) {
      dump.layers.push_back({HeadTensor::from_json(layer.at("attention")), HeadTensor::from_json(layer.at("grad"))});
    }
    dump.context_span = j.at("context_span").get<std::vector<std::size_t>>();
    dump.input_span = j.at("input_span").get<std::vector<std::size_t>>();
    dump.prediction_position = j.at("prediction_position").get<std::size_t>();
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed saliency dump: ") + e.what());
  }
  validate(dump);
  return dump;
}

SaliencyDump load_saliency_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read saliency dump: " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return saliency_dump_from_json(j);
}

Matrix saliency_matrix(const HeadTensor& attention, const HeadTensor& grad) {
  if (attention.heads() != grad.heads() || attention.tokens() != grad.tokens()) {
    throw ValidationError("attention and gradient shapes differ");
  }
  const std::size_t n = attention.tokens();
  Matrix out(n);
  for (std::size_t h = 0; h < attention.heads(); ++h) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) out(r, c) += std::abs(attention(h, r, c) * grad(h, r, c));
    }
  }
  return out;
}

SaliencyScores s_scores(const SaliencyDump& dump) {
  validate(dump);
  SaliencyScores scores;
  const std::size_t p = dump.prediction_position;
  auto mean_flow = [p](const Matrix& m, const std::vector<std::size_t>& span) {
    double sum = 0.0;
    for (auto j : span) sum += m(p, j);
    return sum / static_cast<double>(span.size());
  };
  for (const auto& layer : dump.layers) {
    const Matrix m = saliency_matrix(layer.attention, layer.grad);
    scores.context_to_prediction.push_back(mean_flow(m, dump.context_span));
    scores.input_to_prediction.push_back(mean_flow(m, dump.input_span));
  }
  return scores;
}

std::string to_csv(const SaliencyScores& scores) {
  std::ostringstream out;
  out << "layer,S_c_to_p,S_i_to_p\n";
  for (std::size_t l = 0; l < scores.context_to_prediction.size(); ++l) {
    out << l << ',' << Json(scores.context_to_prediction[l]).dump() << ','
        << Json(scores.input_to_prediction[l]).dump() << '\n';
  }
  return out.str();
}

Json to_json(const SaliencyScores& scores) {
  return Json{{"S_c_to_p", scores.context_to_prediction}, {"S_i_to_p", scores.input_to_prediction}};
}

}  // namespace ctxsent
