#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace nebula {

// Lower-cased maximal runs of [a-z0-9_].
std::vector<std::string> tokenize(std::string_view text);

struct GuardrailCorpus {
  std::vector<std::string> injection;
  std::vector<std::string> benign;

  // One phrase per line; blank lines and '#' lines skipped.
  static GuardrailCorpus parse(std::string_view injection_text, std::string_view benign_text);
  // The 20 + 20 phrase corpus compiled into the library.
  static const GuardrailCorpus& builtin();
};

struct Paraphrase {
  std::size_t phrase = 0;  // 0-based index into the injection list
  std::string text;
};

// Scripted rephrasings of the built-in injection phrases.
const std::vector<Paraphrase>& builtin_paraphrases();

struct GuardrailResult {
  double keyword_hit = 0.0;  // 1 when some injection phrase's tokens all occur in the prompt
  double sim = 0.0;          // max cosine to injections minus max cosine to benign, clipped
  double score = 0.0;        // max(keyword_hit, sim)
};

GuardrailResult guardrail_eval(std::string_view prompt, const GuardrailCorpus& corpus = GuardrailCorpus::builtin());
double guardrail_score(std::string_view prompt, const GuardrailCorpus& corpus = GuardrailCorpus::builtin());

}  // namespace nebula
