// SPDX-License-Identifier: Apache-2.0
#pragma once

// Interpreter / Predictor prompt templates rendered as plain text, plus the
// parsers for their answer lines. The remaining prompts (superfeature, judge,
// rewriter) are local conventions.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace saeforge {

struct ActivatingText {
  std::string text;
  double activation = 0.0;
};

// "Example i (activation v): text" lines, v with 4 decimals.
std::string format_max_examples(std::span<const ActivatingText> examples);
// "Example i: text" lines.
std::string format_zero_examples(std::span<const std::string> examples);

// `type` defaults to `subject` when empty.
std::string render_interpreter_prompt(std::string_view subject, std::string_view type,
                                      std::span<const ActivatingText> max_activating,
                                      std::span<const std::string> zero_activating);
std::string render_predictor_prompt(std::string_view subject, std::string_view description,
                                    std::string_view abstract_text);

// Appended to the original prompt when the first answer could not be parsed.
extern const std::string_view kInterpreterRetryInstruction;
extern const std::string_view kPredictorRetryInstruction;

// Label from the last line starting with "FINAL:" (leading markdown emphasis
// tolerated). Returns nullopt when absent, empty, or longer than 8 words.
std::optional<std::string> parse_final_label(std::string_view reply);
// Number after the last "PREDICTION:"; unclamped.
std::optional<double> parse_prediction(std::string_view reply);

std::string render_superfeature_prompt(std::string_view subject,
                                       std::span<const std::string> child_labels);

struct JudgeOption {
  char letter = 'A';
  std::string label;
};

struct RetrievedText {
  std::string title;
  std::string abstract_text;
};

// Asks which feature was up- (or down-) weighted given the two result lists.
std::string render_judge_prompt(std::string_view query, std::span<const RetrievedText> before,
                                std::span<const RetrievedText> after, bool up_weighted,
                                std::span<const JudgeOption> options, std::size_t abstract_chars);
// Letter after "ANSWER:".
std::optional<char> parse_judge_answer(std::string_view reply);

std::string render_rewriter_prompt(std::string_view query, std::string_view emphasize,
                                   std::string_view deemphasize);
// Text after "QUERY:" on the last such line, or the whole trimmed reply.
std::string parse_rewritten_query(std::string_view reply);

}  // namespace saeforge
