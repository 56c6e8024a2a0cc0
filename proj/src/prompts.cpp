// SPDX-License-Identifier: Apache-2.0
#include "saeforge/prompts.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <utility>

namespace saeforge {

namespace {

constexpr std::string_view kInterpreterTemplate = R"(You are a meticulous {type} researcher conducting an important investigation into a certain neuron in a language model trained on {subject} papers. Your task is to figure out what sort of behaviour this neuron is responsible for -- namely, on what general concepts, features, themes, methodologies or topics does this neuron fire? Here's how you'll complete the task:

INPUT DESCRIPTION: You will be given two inputs: 1) Max Activating Examples and 2) Zero Activating Examples.
1. You will be given several examples of text that activate the neuron, along with a number being how much it was activated. This means there is some feature, theme, methodology, topic or concept in this text that 'excites' this neuron.
2. You will also be given several examples of text that don't activate the neuron. This means the feature, topic or concept is not present in these texts.

OUTPUT DESCRIPTION: Given the inputs provided, complete the following tasks.
1. Based on the MAX ACTIVATING EXAMPLES provided, write down potential topics, concepts, themes, methodologies and features that they share in common. These will need to be specific - remember, all of the text comes from {subject}, so these need to be highly specific {subject} concepts. You may need to look at different levels of granularity (i.e. subsets of a more general topic). List as many as you can think of. Give higher weight to concepts more present/prominent in examples with higher activations.
2. Based on the zero activating examples, rule out any of the topics/concepts/features listed above that are in the zero-activating examples. Systematically go through your list above.
3. Based on the above two steps, perform a thorough analysis of which feature, concept or topic, at what level of granularity, is likely to activate this neuron. Use Occam's razor, as long as it fits the provided evidence. Be highly rational and analytical here.
4. Based on step 4, summarise this concept in 1-8 words, in the form FINAL: <explanation>. Do NOT return anything after these 1-8 words.

Here are the max-activating examples:
{max_examples}

Here are the zero-activating examples:
{zero_examples}

Work through the steps thoroughly and analytically to interpret our neuron.
)";

constexpr std::string_view kPredictorTemplate = R"(You are a {subject} expert that is predicting which abstracts will activate a certain neuron in a language model trained on {subject} papers. Your task is to predict which of the following abstracts will activate the neuron the most. Here's how you'll complete the task:

INPUT DESCRIPTION: You will be given the description of the type of paper abstracts on which the neuron activates. This description will be short. You will then be given an abstract. Based on the concept of the abstract, you will predict whether the neuron will activate or not.

OUTPUT DESCRIPTION: Given the inputs provided, complete the following tasks.
1. Based on the description of the type of paper abstracts on which the neuron activates, reason step by step about whether the neuron will activate on this abstract or not. Be highly rational and analytical here. The abstract may not be clear cut - it may contain topics/concepts close to the neuron description, but not exact. In this case, reason thoroughly and use your best judgement. However, do not speculate on topics that are not present in the abstract.
2. Based on the above step, predict whether the neuron will activate on this abstract or not. If you predict it will activate, give a confidence score from 0 to 1 (i.e. 1 if you're certain it will activate because it contains topics/concepts that match the description exactly, 0 if you're highly uncertain). If you predict it will not activate, give a confidence score from -1 to 0.
3. Provide the final confidence score in the form PREDICTION: (your prediction) e.g. PREDICTION: 0.5. Do NOT return anything after this.

Here is the description/interpretation of the type of paper abstracts on which the neuron activates:
{description}

Here is the abstract to predict:
{abstract}

Work through the steps thoroughly and analytically to predict whether the neuron will activate on this abstract.
)";

// Replaces every "{name}" with its value in one pass, so substituted text is
// never rescanned.
std::string substitute(std::string_view tmpl,
                       std::initializer_list<std::pair<std::string_view, std::string_view>> vars) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const auto name = tmpl.substr(i + 1, close - i - 1);
        bool matched = false;
        for (const auto& [key, value] : vars) {
          if (key == name) {
            out.append(value);
            matched = true;
            break;
          }
        }
        if (matched) {
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string_view strip_emphasis(std::string_view s) {
  s = trim(s);
  while (!s.empty() && (s.front() == '*' || s.front() == '_' || s.front() == '`')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == '*' || s.back() == '_' || s.back() == '`')) s.remove_suffix(1);
  return trim(s);
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

// Value following the last line-leading "<tag>:" marker.
std::optional<std::string_view> last_tagged_value(std::string_view reply, std::string_view tag) {
  std::optional<std::string_view> found;
  for (auto line : lines_of(reply)) {
    auto s = strip_emphasis(line);
    if (s.substr(0, tag.size()) != tag) continue;
    s.remove_prefix(tag.size());
    if (s.empty() || s.front() != ':') {
      // "**FINAL**: x" leaves "*: x" after the tag.
      while (!s.empty() && (s.front() == '*' || s.front() == '_')) s.remove_prefix(1);
      if (s.empty() || s.front() != ':') continue;
    }
    s.remove_prefix(1);
    found = strip_emphasis(s);
  }
  return found;
}

std::string truncate(std::string_view text, std::size_t chars) {
  if (text.size() <= chars) return std::string(text);
  return std::string(text.substr(0, chars)) + "...";
}

}  // namespace

const std::string_view kInterpreterRetryInstruction =
    "\n\nYour previous answer did not end with a line of the form FINAL: <explanation>. "
    "Answer again and finish with that line.";
const std::string_view kPredictorRetryInstruction =
    "\n\nYour previous answer did not end with a line of the form PREDICTION: <number>. "
    "Answer again and finish with that line.";

std::string format_max_examples(std::span<const ActivatingText> examples) {
  std::string out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    char value[32];
    std::snprintf(value, sizeof value, "%.4f", examples[i].activation);
    if (i > 0) out += '\n';
    out += "Example " + std::to_string(i + 1) + " (activation " + value + "): " + examples[i].text;
  }
  return out;
}

std::string format_zero_examples(std::span<const std::string> examples) {
  std::string out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i > 0) out += '\n';
    out += "Example " + std::to_string(i + 1) + ": " + examples[i];
  }
  return out;
}

std::string render_interpreter_prompt(std::string_view subject, std::string_view type,
                                      std::span<const ActivatingText> max_activating,
                                      std::span<const std::string> zero_activating) {
  const std::string max_block = format_max_examples(max_activating);
  const std::string zero_block = format_zero_examples(zero_activating);
  return substitute(kInterpreterTemplate, {{"type", type.empty() ? subject : type},
                                           {"subject", subject},
                                           {"max_examples", max_block},
                                           {"zero_examples", zero_block}});
}

std::string render_predictor_prompt(std::string_view subject, std::string_view description,
                                    std::string_view abstract_text) {
  return substitute(kPredictorTemplate, {{"subject", subject},
                                         {"description", description},
                                         {"abstract", abstract_text}});
}

std::optional<std::string> parse_final_label(std::string_view reply) {
  auto value = last_tagged_value(reply, "FINAL");
  if (!value) return std::nullopt;
  auto label = *value;
  while (!label.empty() && (label.back() == '.' || label.back() == '"')) label.remove_suffix(1);
  while (!label.empty() && label.front() == '"') label.remove_prefix(1);
  label = trim(label);
  std::istringstream words{std::string(label)};
  std::size_t count = 0;
  for (std::string w; words >> w;) ++count;
  if (count == 0 || count > 8) return std::nullopt;
  return std::string(label);
}

std::optional<double> parse_prediction(std::string_view reply) {
  auto value = last_tagged_value(reply, "PREDICTION");
  if (!value) return std::nullopt;
  std::string text(*value);
  if (!text.empty() && text.front() == '(') text.erase(0, 1);
  char* end = nullptr;
  const double parsed = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || !std::isfinite(parsed)) return std::nullopt;
  return parsed;
}

std::string render_superfeature_prompt(std::string_view subject,
                                       std::span<const std::string> child_labels) {
  std::string out = "You are an expert in " + std::string(subject) +
                    ". The following descriptions label related neurons in a language model "
                    "trained on " + std::string(subject) +
                    " papers. Together they form one family of neurons:\n";
  for (const auto& label : child_labels) out += "- " + label + "\n";
  out +=
      "\nDescribe the single broader concept these neurons share. Summarise it in 1-8 words, in "
      "the form FINAL: <explanation>. Do NOT return anything after these 1-8 words.\n";
  return out;
}

std::string render_judge_prompt(std::string_view query, std::span<const RetrievedText> before,
                                std::span<const RetrievedText> after, bool up_weighted,
                                std::span<const JudgeOption> options, std::size_t abstract_chars) {
  auto list = [&](std::span<const RetrievedText> docs) {
    std::string out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      out += std::to_string(i + 1) + ". " + docs[i].title + ": " +
             truncate(docs[i].abstract_text, abstract_chars) + "\n";
    }
    return out;
  };
  std::string out = "A literature search query was modified by changing the weight of one "
                    "concept. Query: " + std::string(query) + "\n\nResults before the change:\n" +
                    list(before) + "\nResults after the change:\n" + list(after) +
                    "\nWhich concept was " +
                    (up_weighted ? "emphasised (up-weighted)" : "suppressed (down-weighted)") +
                    "?\n";
  for (const auto& option : options) out += std::string(1, option.letter) + ") " + option.label + "\n";
  out += "\nReply with the letter of your choice in the form ANSWER: <letter>.\n";
  return out;
}

std::optional<char> parse_judge_answer(std::string_view reply) {
  auto value = last_tagged_value(reply, "ANSWER");
  if (!value) return std::nullopt;
  const auto at = value->find_first_not_of("(*[ '\"");
  if (at == std::string_view::npos) return std::nullopt;
  const char c = static_cast<char>(std::toupper(static_cast<unsigned char>((*value)[at])));
  if (c < 'A' || c > 'Z') return std::nullopt;
  return c;
}

std::string render_rewriter_prompt(std::string_view query, std::string_view emphasize,
                                   std::string_view deemphasize) {
  return "Rewrite the following literature search query so that it emphasises \"" +
         std::string(emphasize) + "\" and no longer focuses on \"" + std::string(deemphasize) +
         "\". Keep the rest of its meaning.\nQuery: " + std::string(query) +
         "\n\nReturn only the rewritten query in the form QUERY: <rewritten query>.\n";
}

std::string parse_rewritten_query(std::string_view reply) {
  if (auto value = last_tagged_value(reply, "QUERY")) return std::string(*value);
  return std::string(trim(reply));
}

}  // namespace saeforge
