#include "nebula/guardrail.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "nebula/data.hpp"
#include "nebula/error.hpp"

namespace nebula {

namespace {

using Counts = std::map<std::string, double, std::less<>>;

Counts count_tokens(const std::vector<std::string>& tokens) {
  Counts c;
  for (const auto& t : tokens) c[t] += 1.0;
  return c;
}

double cosine(const Counts& a, const Counts& b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (const auto& [t, v] : a) {
    na += v * v;
    if (auto it = b.find(t); it != b.end()) dot += v * it->second;
  }
  for (const auto& [t, v] : b) nb += v * v;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

std::vector<std::string> phrase_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    out.emplace_back(line);
  }
  return out;
}

struct Prepared {
  std::vector<Counts> injection;
  std::vector<std::set<std::string, std::less<>>> injection_sets;
  std::vector<Counts> benign;
};

Prepared prepare(const GuardrailCorpus& corpus) {
  Prepared p;
  for (const auto& phrase : corpus.injection) {
    const auto tokens = tokenize(phrase);
    p.injection.push_back(count_tokens(tokens));
    p.injection_sets.emplace_back(tokens.begin(), tokens.end());
  }
  for (const auto& phrase : corpus.benign) p.benign.push_back(count_tokens(tokenize(phrase)));
  return p;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char raw : text) {
    const char c = (raw >= 'A' && raw <= 'Z') ? static_cast<char>(raw - 'A' + 'a') : raw;
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_') {
      cur += c;
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

GuardrailCorpus GuardrailCorpus::parse(std::string_view injection_text, std::string_view benign_text) {
  return GuardrailCorpus{phrase_lines(injection_text), phrase_lines(benign_text)};
}

const GuardrailCorpus& GuardrailCorpus::builtin() {
  static const GuardrailCorpus corpus = parse(data::kGuardrailInjection, data::kGuardrailBenign);
  return corpus;
}

const std::vector<Paraphrase>& builtin_paraphrases() {
  static const std::vector<Paraphrase> table = [] {
    std::vector<Paraphrase> out;
    for (const auto& line : phrase_lines(data::kParaphrases)) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw Error(Errc::malformed_record, "paraphrases", "missing tab");
      const std::size_t index = std::stoul(line.substr(0, tab));
      if (index == 0) throw Error(Errc::malformed_record, "paraphrases", "indices are 1-based");
      out.push_back({index - 1, line.substr(tab + 1)});
    }
    return out;
  }();
  return table;
}

GuardrailResult guardrail_eval(std::string_view prompt, const GuardrailCorpus& corpus) {
  GuardrailResult r;
  const auto tokens = tokenize(prompt);
  if (tokens.empty()) return r;

  // The built-in corpus is prepared once; custom corpora per call.
  static const Prepared builtin = prepare(GuardrailCorpus::builtin());
  Prepared local;
  const Prepared* p = &builtin;
  if (&corpus != &GuardrailCorpus::builtin()) {
    local = prepare(corpus);
    p = &local;
  }

  const Counts counts = count_tokens(tokens);
  for (const auto& set : p->injection_sets) {
    if (set.empty()) continue;
    const bool subset = std::all_of(set.begin(), set.end(), [&](const std::string& t) { return counts.count(t) > 0; });
    if (subset) {
      r.keyword_hit = 1.0;
      break;
    }
  }
  double best_inj = 0.0;
  for (const auto& c : p->injection) best_inj = std::max(best_inj, cosine(counts, c));
  double best_benign = 0.0;
  for (const auto& c : p->benign) best_benign = std::max(best_benign, cosine(counts, c));
  r.sim = std::clamp(best_inj - best_benign, 0.0, 1.0);
  r.score = std::max(r.keyword_hit, r.sim);
  return r;
}

double guardrail_score(std::string_view prompt, const GuardrailCorpus& corpus) {
  return guardrail_eval(prompt, corpus).score;
}

}  // namespace nebula
