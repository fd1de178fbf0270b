#include "ctxsent/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "ctxsent/backend.hpp"
#include "ctxsent/digest.hpp"
#include "ctxsent/error.hpp"

namespace ctxsent {

namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t count = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

// Single left-to-right pass over the template; substituted values are never
// rescanned, so a sentence containing "[x1]" stays intact.
std::string substitute(std::string_view tmpl,
                       const std::vector<std::pair<std::string_view, std::string_view>>& vars) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool matched = false;
    for (const auto& [key, value] : vars) {
      if (tmpl.substr(i, key.size()) == key) {
        out.append(value);
        i += key.size();
        matched = true;
        break;
      }
    }
    if (!matched) out.push_back(tmpl[i++]);
  }
  return out;
}

RenderedPrompt make_prompt(std::string text, std::optional<std::string> image_token) {
  RenderedPrompt prompt;
  prompt.hash = prompt_digest(text, image_token);
  prompt.text = std::move(text);
  prompt.image_token = std::move(image_token);
  return prompt;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

std::string_view to_string(TemplateSource s) noexcept {
  return s == TemplateSource::Builtin ? "builtin" : "generated";
}

void validate(const PromptTemplate& tmpl) {
  const auto n = count_occurrences(tmpl.body, kSentencePlaceholder);
  if (n != 1) {
    throw ValidationError("template '" + tmpl.knowledge_type + "' must contain \"[x]\" exactly once (found " +
                          std::to_string(n) + ")");
  }
}

std::string prompt_digest(std::string_view text, const std::optional<std::string>& image_token) {
  return DigestBuilder().add("prompt").add(text).add(image_token.value_or("")).hex();
}

const std::vector<PromptTemplate>& registry_templates() {
  static const std::vector<PromptTemplate> kTemplates = {
      {"artistic",
       "Identify and discuss any artistic movements or styles that influenced the creation of the image. "
       "Explore how the artist's choice of style aligns with or deviates from prevalent artistic trends of "
       "the time. Sentence: [x]."},
      {"biographical",
       "Delve into the backgrounds of individuals associated with the image and text. Explore the "
       "biographies of artists, authors, or other relevant figures, and discuss how their life experiences "
       "shaped the creation and interpretation of the work. Sentence: [x]"},
      {"character",
       "Focus on characters within the image and sente. Analyze their personalities, relationships, and "
       "potential character development. Discuss how the visual and textual elements contribute to "
       "character portrayal. Sentence: [x]"},
      {"cultural",
       "Explore how the image and sentence reflect or represent aspects of a particular culture. Discuss "
       "the cultural significance, traditions, or values implied by the elements in the image and "
       "sentence. Sentence: [x]"},
      {"environmental",
       "Examine the environmental elements within the image and sentence, discussing ecological factors, "
       "environmental changes, or the relationship between human activities and the depicted setting. "
       "Sentence: [x]"},
      {"historical",
       "Give you an image and sentence, you can provide historical context, important events, and relevant "
       "background information related to the image and sentence. Sentence: [x]"},
      {"literary",
       "Conduct a literary analysis of the sentence, exploring themes, symbolism, and narrative techniques. "
       "Discuss how the words complement or contrast with the visual elements in the image. Sentence: [x]"},
      {"political",
       "Examine the political during the time the image and text were created. Discuss any political "
       "events, movements, or ideologies that may have influenced the content and tone of the work. "
       "Sentence: [x]"},
      {"scientific",
       "Investigate the scientific elements within the image, delving into discoveries, advancements, or "
       "breakthroughs related to the subject matter mentioned in the sentence. Sentence: [x]"},
      {"social",
       "Investigate the image and text as a form of social commentary. Analyze how the work reflects or "
       "critiques social issues, norms, or inequalities prevalent at the time of creation. Sentence: [x]"},
      {"financial",
       "Give you a sentence and image, you should provide related financial knowledge. Sentence: [x]"},
  };
  return kTemplates;
}

const PromptTemplate& find_template(std::string_view knowledge_type,
                                    const std::vector<PromptTemplate>& overrides) {
  for (const auto& t : overrides) {
    if (t.knowledge_type == knowledge_type) return t;
  }
  for (const auto& t : registry_templates()) {
    if (t.knowledge_type == knowledge_type) return t;
  }
  throw ConfigError("unknown knowledge type '" + std::string(knowledge_type) + "'");
}

std::vector<PromptTemplate> load_template_overrides(const std::filesystem::path& path) {
  std::vector<PromptTemplate> out;
  for (const auto& row : read_jsonl_lines(path)) {
    PromptTemplate t;
    try {
      t.knowledge_type = row.value.at("knowledge_type").get<std::string>();
      t.body = row.value.at("body").get<std::string>();
    } catch (const std::exception& e) {
      throw_schema_error(path, row.line, e.what());
    }
    t.source = TemplateSource::Builtin;
    validate(t);
    out.push_back(std::move(t));
  }
  return out;
}

RenderedPrompt render_context_prompt(const PromptTemplate& tmpl, const Sample& sample,
                                     const std::optional<std::string>& image_token) {
  validate(tmpl);
  if (sample.sentence.empty()) throw ValidationError("sample " + sample.id + ": empty sentence");
  std::string text = substitute(tmpl.body, {{kSentencePlaceholder, sample.sentence}});
  std::optional<std::string> token;
  if (image_token && sample.image) {
    token = image_token;
    text = *image_token + "\n" + text;
  }
  return make_prompt(std::move(text), std::move(token));
}

std::string_view to_string(TaskLevel level) noexcept {
  return level == TaskLevel::Aspect ? "aspect" : "sentence";
}

TaskLevel parse_task_level(std::string_view text) {
  if (text == "aspect") return TaskLevel::Aspect;
  if (text == "sentence") return TaskLevel::Sentence;
  throw ConfigError("unknown task level '" + std::string(text) + "' (expected aspect or sentence)");
}

InstructionTemplate load_instruction_template(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read instruction template: " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("instruction template " + path.string() + ": " + e.what());
  }
  InstructionTemplate t;
  auto read = [&](const char* key, std::string& field) {
    if (auto it = j.find(key); it != j.end()) field = it->get<std::string>();
  };
  read("context_header", t.context_header);
  read("context_open", t.context_open);
  read("context_close", t.context_close);
  read("sentence_prefix", t.sentence_prefix);
  read("aspect_question", t.aspect_question);
  read("sentence_question", t.sentence_question);
  read("options_header", t.options_header);
  read("answer_prefix", t.answer_prefix);
  if (auto it = j.find("option_texts"); it != j.end()) {
    if (!it->is_array() || it->size() != kNumPolarities) {
      throw ConfigError("option_texts must list exactly 3 options");
    }
    for (std::size_t i = 0; i < kNumPolarities; ++i) t.option_texts[i] = it->at(i).get<std::string>();
  }
  return t;
}

TaskInstruction render_task_instruction(const Sample& sample, TaskLevel level,
                                        const std::optional<std::string>& context,
                                        const InstructionTemplate& wording,
                                        const std::optional<std::string>& image_token) {
  if (level == TaskLevel::Aspect && !sample.aspect) {
    throw ValidationError("sample " + sample.id + ": aspect-level instruction requires an aspect");
  }
  std::ostringstream out;
  if (image_token && sample.image) out << *image_token << '\n';
  if (context) {
    out << wording.context_header << '\n'
        << wording.context_open << '\n'
        << *context << '\n'
        << wording.context_close << "\n\n";
  }
  out << wording.sentence_prefix << sample.sentence << '\n';
  if (level == TaskLevel::Aspect) {
    out << substitute(wording.aspect_question, {{"{aspect}", *sample.aspect}}) << '\n';
  } else {
    out << wording.sentence_question << '\n';
  }
  out << wording.options_header << '\n';
  static constexpr char kLetters[] = {'A', 'B', 'C'};
  for (std::size_t i = 0; i < kNumPolarities; ++i) {
    out << kLetters[i] << ". " << wording.option_texts[i] << '\n';
  }
  out << wording.answer_prefix;

  std::optional<std::string> token;
  if (image_token && sample.image) token = image_token;
  return TaskInstruction{make_prompt(out.str(), std::move(token)), wording.option_texts};
}

RenderedPrompt render_judge_prompt(std::string_view sentence, std::string_view context1,
                                   std::string_view context2) {
  if (sentence.empty() || context1.empty() || context2.empty()) {
    throw ValidationError("judge prompt requires a non-empty sentence and two contexts");
  }
  static constexpr std::string_view kJudgeTemplate =
      "**System**: In this task, you will be asked to compare the relevance of two paragraphs to "
      "determine which one is more pertinent to the provided source sentence and image and benefits the "
      "sentiment analysis task the most. There are three options for you to choose from:\n"
      "1. Context1 is better. If you think Context 1 is more relevant to the source sentence and image "
      "and benefits the sentiment analysis task.\n"
      "2. Context2 is better. If you think Context 2 is more relevant to the source sentence and image "
      "and benefits the sentiment analysis task.\n"
      "3. Context1, Context2 are the same: If you think Context1, Context2 have the same relevance to the "
      "source sentence and image, then choose this option.\n"
      "\n"
      "**Your answer is a JSON DICT that has one key: answer. For example: "
      "{\"answer\": \"x. Context x is better.\"}**\n"
      "\n"
      "**INPUT**\n"
      "Source Sentence: \"[s]\"\n"
      "\n"
      "Context1: \"[x1]\"\n"
      "\n"
      "Context2: \"[x2]\"\n"
      "\n"
      "**OUTPUT**\n";
  return make_prompt(
      substitute(kJudgeTemplate, {{"[s]", sentence}, {"[x1]", context1}, {"[x2]", context2}}),
      std::nullopt);
}

std::vector<PromptTemplate> parse_generated_templates(std::string_view raw) {
  std::vector<std::string> paragraphs;
  std::string current;
  std::istringstream in{std::string(raw)};
  std::string line;
  auto flush = [&] {
    auto p = trim(current);
    if (!p.empty()) paragraphs.push_back(std::move(p));
    current.clear();
  };
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      flush();
    } else {
      if (!current.empty()) current.push_back('\n');
      current += line;
    }
  }
  flush();
  if (paragraphs.empty()) {
    throw ValidationError("could not parse any template from model output: \"" + std::string(raw) + "\"");
  }

  std::vector<PromptTemplate> out;
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    std::string body = paragraphs[i];
    std::string type = "generated-" + std::to_string(i + 1);
    // "Historical: Give you ..." names its knowledge type.
    if (auto colon = body.find(':'); colon != std::string::npos && colon < 32) {
      std::string head = trim(std::string_view(body).substr(0, colon));
      bool word = !head.empty() && std::all_of(head.begin(), head.end(), [](unsigned char c) {
        return std::isalpha(c) || c == '-' || c == '_';
      });
      if (word && head != "Sentence") {
        std::transform(head.begin(), head.end(), head.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        type = head;
        body = trim(std::string_view(body).substr(colon + 1));
      }
    }
    const auto placeholders = count_occurrences(body, kSentencePlaceholder);
    if (placeholders == 0) {
      body += " Sentence: [x]";
    } else if (placeholders > 1) {
      throw ValidationError("generated template " + std::to_string(i + 1) +
                            " has more than one \"[x]\": \"" + body + "\"");
    }
    out.push_back({std::move(type), std::move(body), TemplateSource::Generated});
  }
  return out;
}

std::vector<PromptTemplate> generate_templates(Backend& backend, std::string_view instruction) {
  GenerateRequest request;
  request.prompt = make_prompt(std::string(instruction), std::nullopt);
  return parse_generated_templates(backend.generate(request));
}

}  // namespace ctxsent
