#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctxsent/datamodel.hpp"

namespace ctxsent {

class Backend;

inline constexpr std::string_view kSentencePlaceholder = "[x]";
inline constexpr std::string_view kDefaultImageToken = "<image>";

enum class TemplateSource { Builtin, Generated };
std::string_view to_string(TemplateSource s) noexcept;

struct PromptTemplate {
  std::string knowledge_type;
  std::string body;
  TemplateSource source = TemplateSource::Builtin;
};

/// Throws ValidationError unless the body holds "[x]" exactly once.
void validate(const PromptTemplate& tmpl);

struct RenderedPrompt {
  std::string text;
  std::optional<std::string> image_token;
  std::string hash;
};

/// Digest of a rendered prompt: SHA-256 over the length-prefixed text and
/// image token. Shared with the response cache key.
std::string prompt_digest(std::string_view text, const std::optional<std::string>& image_token);

/// The eleven built-in world-knowledge templates, in registry order.
const std::vector<PromptTemplate>& registry_templates();

/// Looks up a template by knowledge type, searching `overrides` first.
/// Throws ConfigError for unknown types.
const PromptTemplate& find_template(std::string_view knowledge_type,
                                    const std::vector<PromptTemplate>& overrides = {});

/// Reads a JSONL file of {knowledge_type, body} objects.
std::vector<PromptTemplate> load_template_overrides(const std::filesystem::path& path);

/// Replaces "[x]" with the sentence and prepends the image token (followed by a
/// newline) when both a token and an image are present.
RenderedPrompt render_context_prompt(const PromptTemplate& tmpl, const Sample& sample,
                                     const std::optional<std::string>& image_token);

enum class TaskLevel { Aspect, Sentence };
std::string_view to_string(TaskLevel level) noexcept;
TaskLevel parse_task_level(std::string_view text);

/// Wording of the single-choice classification instruction. `{aspect}` in
/// `aspect_question` is replaced with the queried target.
struct InstructionTemplate {
  std::string context_header = "Background knowledge:";
  std::string context_open = "<<<";
  std::string context_close = ">>>";
  std::string sentence_prefix = "Sentence: ";
  std::string aspect_question =
      "Question: What is the sentiment polarity of \"{aspect}\" in the sentence?";
  std::string sentence_question = "Question: What is the sentiment polarity of the sentence?";
  std::string options_header = "Options:";
  std::array<std::string, kNumPolarities> option_texts = {"negative", "neutral", "positive"};
  std::string answer_prefix = "Answer:";
};

/// Reads a JSON object whose keys override InstructionTemplate fields.
InstructionTemplate load_instruction_template(const std::filesystem::path& path);

struct TaskInstruction {
  RenderedPrompt prompt;
  /// Option texts in canonical polarity order.
  std::array<std::string, kNumPolarities> choices;
};

TaskInstruction render_task_instruction(const Sample& sample, TaskLevel level,
                                        const std::optional<std::string>& context,
                                        const InstructionTemplate& wording = {},
                                        const std::optional<std::string>& image_token = std::nullopt);

/// Pairwise context-relevance judge prompt with [s], [x1], [x2] substituted.
RenderedPrompt render_judge_prompt(std::string_view sentence, std::string_view context1,
                                   std::string_view context2);

/// Asks a text backend for templates and parses its answer: one template per
/// blank-line separated paragraph, "Sentence: [x]" appended when missing.
std::vector<PromptTemplate> generate_templates(Backend& backend, std::string_view instruction);

/// Parsing half of generate_templates, exposed for tests.
std::vector<PromptTemplate> parse_generated_templates(std::string_view raw);

}  // namespace ctxsent
