#include "ctxsent/ctxsent.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include "ctxsent/backend.hpp"
#include "ctxsent/classifier.hpp"
#include "ctxsent/error.hpp"
#include "ctxsent/eval.hpp"
#include "ctxsent/fusion.hpp"
#include "ctxsent/pipeline.hpp"
#include "ctxsent/prompts.hpp"
#include "ctxsent/saliency.hpp"
#include "ctxsent/version.hpp"

struct ctxsent_backend {
  std::unique_ptr<ctxsent::Backend> impl;
};

struct ctxsent_pipeline {
  std::unique_ptr<ctxsent::Pipeline> impl;
  std::string run_dir;
};

namespace {

using ctxsent::Json;

thread_local std::string g_last_error;
thread_local std::string g_last_error_json;

void set_error(ctxsent_status status, const std::string& message) {
  g_last_error = message;
  g_last_error_json =
      Json{{"status", ctxsent_status_name(status)}, {"code", static_cast<int>(status)}, {"message", message}}.dump();
}

void clear_error() {
  g_last_error.clear();
  g_last_error_json.clear();
}

// Maps exceptions escaping `fn` onto status codes; nothing crosses the C ABI.
template <typename Fn>
ctxsent_status guarded(Fn&& fn) {
  try {
    clear_error();
    fn();
    return CTXSENT_OK;
  } catch (const ctxsent::Error& e) {
    const auto status = static_cast<ctxsent_status>(static_cast<int>(e.kind()));
    set_error(status, e.what());
    return status;
  } catch (const Json::exception& e) {
    set_error(CTXSENT_ERR_VALIDATION, e.what());
    return CTXSENT_ERR_VALIDATION;
  } catch (const std::filesystem::filesystem_error& e) {
    set_error(CTXSENT_ERR_IO, e.what());
    return CTXSENT_ERR_IO;
  } catch (const std::exception& e) {
    set_error(CTXSENT_ERR_INTERNAL, e.what());
    return CTXSENT_ERR_INTERNAL;
  } catch (...) {
    set_error(CTXSENT_ERR_INTERNAL, "unknown error");
    return CTXSENT_ERR_INTERNAL;
  }
}

void require(bool condition, const char* what) {
  if (!condition) throw ctxsent::Error(ctxsent::ErrorKind::InvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

ctxsent::PolarityDistribution dist_from(const double probs[3]) {
  return ctxsent::PolarityDistribution::from_probs({probs[0], probs[1], probs[2]});
}

void copy_out(const ctxsent::PolarityDistribution& d, double out[3]) {
  for (std::size_t i = 0; i < 3; ++i) out[i] = d[i];
}

ctxsent::FusionConfig fusion_from(const ctxsent_fusion_params* params) {
  ctxsent::FusionConfig c;
  if (params != nullptr) {
    c.alpha = params->alpha;
    c.beta = params->beta;
    if (params->strategy != nullptr) c.strategy = ctxsent::parse_strategy(params->strategy);
    c.cxmi_threshold = params->cxmi_threshold;
    c.gate = params->gate != 0;
  }
  ctxsent::validate(c);
  return c;
}

}  // namespace

extern "C" {

const char* ctxsent_version(void) { return ctxsent::kVersion; }

const char* ctxsent_status_name(ctxsent_status status) {
  switch (status) {
    case CTXSENT_OK: return "ok";
    case CTXSENT_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case CTXSENT_ERR_VALIDATION: return "validation";
    case CTXSENT_ERR_CONFIG: return "config";
    case CTXSENT_ERR_IO: return "io";
    case CTXSENT_ERR_BACKEND: return "backend";
    case CTXSENT_ERR_CAPABILITY: return "capability";
    case CTXSENT_ERR_MISSING_ARTIFACT: return "missing_artifact";
    case CTXSENT_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* ctxsent_last_error(void) { return g_last_error.c_str(); }
const char* ctxsent_last_error_json(void) { return g_last_error_json.c_str(); }

void ctxsent_string_free(char* str) { std::free(str); }

void ctxsent_fusion_params_default(ctxsent_fusion_params* params) {
  if (params == nullptr) return;
  params->alpha = 0.3;
  params->beta = 0.45;
  params->strategy = "cf";
  params->cxmi_threshold = 1.1;
  params->gate = 0;
}

ctxsent_status ctxsent_delta(const double probs[3], double* out_delta) {
  return guarded([&] {
    require(probs && out_delta, "null argument");
    *out_delta = ctxsent::delta(dist_from(probs));
  });
}

ctxsent_status ctxsent_fuse(const double base[3], const double with_context[3], const ctxsent_fusion_params* params,
                            double out_probs[3], int* out_label, int* out_is_hard, double* out_delta) {
  return guarded([&] {
    require(base && with_context && out_probs, "null argument");
    const auto outcome = ctxsent::fuse(dist_from(base), dist_from(with_context), fusion_from(params));
    copy_out(outcome.dist, out_probs);
    if (out_label) *out_label = static_cast<int>(outcome.label);
    if (out_is_hard) *out_is_hard = outcome.is_hard ? 1 : 0;
    if (out_delta) *out_delta = outcome.delta;
  });
}

ctxsent_status ctxsent_softmax(const double scores[3], double out_probs[3]) {
  return guarded([&] {
    require(scores && out_probs, "null argument");
    copy_out(ctxsent::softmax({scores[0], scores[1], scores[2]}), out_probs);
  });
}

ctxsent_status ctxsent_js_divergence(const double p[3], const double q[3], double* out) {
  return guarded([&] {
    require(p && q && out, "null argument");
    *out = ctxsent::js_divergence(dist_from(p), dist_from(q));
  });
}

ctxsent_status ctxsent_compute_metrics(const int* golds, const int* preds, size_t n, ctxsent_metrics* out) {
  return guarded([&] {
    require(out != nullptr, "null output");
    require(n == 0 || (golds && preds), "null label array");
    std::vector<ctxsent::Polarity> g, p;
    for (size_t i = 0; i < n; ++i) {
      g.push_back(ctxsent::polarity_from_index(golds[i]));
      p.push_back(ctxsent::polarity_from_index(preds[i]));
    }
    const auto m = ctxsent::compute_metrics(g, p);
    out->accuracy = m.accuracy;
    out->macro_precision = m.macro_precision;
    out->macro_recall = m.macro_recall;
    out->macro_f1 = m.macro_f1;
    for (std::size_t c = 0; c < 3; ++c) {
      out->precision[c] = m.per_class[c].precision;
      out->recall[c] = m.per_class[c].recall;
      out->f1[c] = m.per_class[c].f1;
      out->support[c] = m.per_class[c].support;
    }
    out->n = m.n;
  });
}

ctxsent_status ctxsent_templates_json(char** out_json) {
  return guarded([&] {
    require(out_json != nullptr, "null output");
    Json rows = Json::array();
    for (const auto& t : ctxsent::registry_templates()) {
      rows.push_back({{"knowledge_type", t.knowledge_type}, {"body", t.body}, {"source", ctxsent::to_string(t.source)}});
    }
    *out_json = dup_string(rows.dump());
  });
}

ctxsent_status ctxsent_render_judge_prompt(const char* sentence, const char* context1, const char* context2,
                                           char** out_text) {
  return guarded([&] {
    require(sentence && context1 && context2 && out_text, "null argument");
    *out_text = dup_string(ctxsent::render_judge_prompt(sentence, context1, context2).text);
  });
}

ctxsent_status ctxsent_render_context_prompt(const char* knowledge_type, const char* sample_json,
                                             const char* image_token, char** out_json) {
  return guarded([&] {
    require(knowledge_type && sample_json && out_json, "null argument");
    const auto sample = Json::parse(sample_json).get<ctxsent::Sample>();
    const auto prompt = ctxsent::render_context_prompt(
        ctxsent::find_template(knowledge_type), sample,
        image_token ? std::optional<std::string>(image_token) : std::nullopt);
    *out_json = dup_string(Json{{"text", prompt.text}, {"hash", prompt.hash}}.dump());
  });
}

ctxsent_status ctxsent_analyze_saliency(const char* dump_path, const char* csv_path, char** out_json) {
  return guarded([&] {
    require(dump_path != nullptr, "null dump path");
    const auto scores = ctxsent::s_scores(ctxsent::load_saliency_dump(dump_path));
    if (csv_path != nullptr) {
      std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
      if (!out) throw ctxsent::IoError(std::string("cannot write ") + csv_path);
      out << ctxsent::to_csv(scores);
    }
    if (out_json) *out_json = dup_string(ctxsent::to_json(scores).dump());
  });
}

ctxsent_status ctxsent_backend_open(const char* config_json, ctxsent_backend** out) {
  return guarded([&] {
    require(config_json && out, "null argument");
    *out = nullptr;
    auto config = Json::parse(config_json).get<ctxsent::BackendConfig>();
    auto handle = std::make_unique<ctxsent_backend>();
    handle->impl = ctxsent::make_backend(config);
    *out = handle.release();
  });
}

void ctxsent_backend_close(ctxsent_backend* backend) { delete backend; }

ctxsent_status ctxsent_backend_generate(ctxsent_backend* backend, const char* prompt, const char* image,
                                        char** out_text) {
  return guarded([&] {
    require(backend && prompt && out_text, "null argument");
    ctxsent::GenerateRequest request;
    request.prompt.text = prompt;
    request.prompt.hash = ctxsent::prompt_digest(prompt, std::nullopt);
    if (image) request.image = image;
    *out_text = dup_string(backend->impl->generate(request));
  });
}

ctxsent_status ctxsent_backend_score(ctxsent_backend* backend, const char* prompt, const char* const choices[3],
                                     const char* image, double out_loglik[3]) {
  return guarded([&] {
    require(backend && prompt && choices && out_loglik, "null argument");
    ctxsent::ScoreRequest request;
    request.prompt.text = prompt;
    request.prompt.hash = ctxsent::prompt_digest(prompt, std::nullopt);
    for (std::size_t i = 0; i < 3; ++i) {
      require(choices[i] != nullptr, "null choice");
      request.choices[i] = choices[i];
    }
    if (image) request.image = image;
    const auto scores = backend->impl->score_choices(request);
    for (std::size_t i = 0; i < 3; ++i) out_loglik[i] = scores.loglik[i];
  });
}

ctxsent_status ctxsent_pipeline_open(const char* config_path, const char* overrides_json, ctxsent_pipeline** out) {
  return guarded([&] {
    require(config_path && out, "null argument");
    *out = nullptr;
    Json overrides = overrides_json ? Json::parse(overrides_json) : Json();
    auto handle = std::make_unique<ctxsent_pipeline>();
    handle->impl = std::make_unique<ctxsent::Pipeline>(ctxsent::load_run_config(config_path, overrides));
    handle->run_dir = handle->impl->run_dir().generic_string();
    *out = handle.release();
  });
}

void ctxsent_pipeline_close(ctxsent_pipeline* pipeline) { delete pipeline; }

const char* ctxsent_pipeline_run_dir(const ctxsent_pipeline* pipeline) {
  return pipeline ? pipeline->run_dir.c_str() : "";
}

ctxsent_status ctxsent_pipeline_run_stage(ctxsent_pipeline* pipeline, const char* stage, char** out_summary_json) {
  return guarded([&] {
    require(pipeline && stage, "null argument");
    auto& p = *pipeline->impl;
    const std::string name = stage;
    Json summary;
    if (name == "ingest") {
      summary = p.ingest();
    } else if (name == "generate-context") {
      summary = p.generate_contexts();
    } else if (name == "predict") {
      summary = p.predict();
    } else if (name == "fuse") {
      summary = p.fuse();
    } else if (name == "evaluate") {
      summary = p.evaluate();
    } else if (name == "sweep") {
      summary = p.sweep();
    } else if (name == "run") {
      summary = p.run_all();
    } else {
      throw ctxsent::Error(ctxsent::ErrorKind::InvalidArgument, "unknown stage '" + name + "'");
    }
    if (out_summary_json) *out_summary_json = dup_string(summary.dump());
  });
}

}  // extern "C"
