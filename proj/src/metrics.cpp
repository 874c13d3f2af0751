#include "dramaturg/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>
#include <unordered_map>

#include "dramaturg/error.hpp"
#include "dramaturg/text.hpp"

namespace dramaturg::metrics {

std::size_t levenshtein(std::string_view a, std::string_view b) {
  const auto x = text::utf8_decode(a);
  const auto y = text::utf8_decode(b);
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

double relative_levenshtein(std::string_view original, std::string_view edited) {
  const auto n = text::utf8_length(original);
  if (n == 0) throw Error(ErrorCode::EmptyOriginal, "relative distance needs a non-empty original");
  return static_cast<double>(levenshtein(original, edited)) / static_cast<double>(n);
}

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && (std::isspace(u) || std::ispunct(u))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(u < 0x80 ? std::tolower(u) : u);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace {

const std::unordered_map<std::string_view, std::string_view>& irregulars() {
  static const std::unordered_map<std::string_view, std::string_view> table = {
      {"was", "be"},       {"were", "be"},       {"is", "be"},       {"am", "be"},
      {"are", "be"},       {"been", "be"},       {"being", "be"},    {"has", "have"},
      {"had", "have"},     {"having", "have"},   {"did", "do"},      {"does", "do"},
      {"done", "do"},      {"went", "go"},       {"gone", "go"},     {"goes", "go"},
      {"men", "man"},      {"women", "woman"},   {"children", "child"}, {"feet", "foot"},
      {"teeth", "tooth"},  {"mice", "mouse"},    {"people", "person"}, {"said", "say"},
      {"made", "make"},    {"making", "make"},   {"took", "take"},   {"taken", "take"},
      {"taking", "take"},  {"saw", "see"},       {"seen", "see"},    {"came", "come"},
      {"coming", "come"},  {"knew", "know"},     {"known", "know"},  {"got", "get"},
      {"gave", "give"},    {"given", "give"},    {"giving", "give"}, {"found", "find"},
      {"thought", "think"}, {"told", "tell"},    {"felt", "feel"},   {"left", "leave"},
      {"ran", "run"},      {"began", "begin"},   {"begun", "begin"}, {"wrote", "write"},
      {"written", "write"}, {"spoke", "speak"},  {"spoken", "speak"}, {"sang", "sing"},
      {"sung", "sing"},    {"stood", "stand"},   {"sat", "sit"},     {"brought", "bring"},
      {"bought", "buy"},   {"kept", "keep"},     {"held", "hold"},   {"became", "become"},
      {"better", "good"},  {"best", "good"},     {"worse", "bad"},   {"worst", "bad"},
      {"lives", "life"},   {"wives", "wife"},    {"knives", "knife"}, {"loved", "love"},
      {"loving", "love"},  {"lived", "live"},    {"living", "live"}, {"died", "die"},
      {"dying", "die"},    {"hoped", "hope"},    {"saved", "save"},  {"saving", "save"},
  };
  return table;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

// "runn" -> "run", but "fall" and "pass" keep their doubles.
std::string undouble(std::string stem) {
  auto n = stem.size();
  if (n >= 2 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) && stem[n - 1] != 'l' &&
      stem[n - 1] != 's' && stem[n - 1] != 'z') {
    stem.pop_back();
  }
  return stem;
}

}  // namespace

std::string lemmatize(std::string_view token) {
  std::string w;
  for (char c : token) {
    auto u = static_cast<unsigned char>(c);
    w += static_cast<char>(u < 0x80 ? std::tolower(u) : u);
  }
  if (auto it = irregulars().find(w); it != irregulars().end()) return std::string(it->second);
  if (w.size() <= 3) return w;

  std::string_view v = w;
  if (ends_with(v, "ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(v, "ied") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(v, "ing") && w.size() >= 6) return undouble(w.substr(0, w.size() - 3));
  if (ends_with(v, "ed") && w.size() >= 5) return undouble(w.substr(0, w.size() - 2));
  if (ends_with(v, "es")) {
    auto stem = v.substr(0, v.size() - 2);
    if (ends_with(stem, "s") || ends_with(stem, "x") || ends_with(stem, "z") || ends_with(stem, "ch") ||
        ends_with(stem, "sh")) {
      return std::string(stem);
    }
  }
  if (ends_with(v, "s") && !ends_with(v, "ss") && !ends_with(v, "us") && !ends_with(v, "is")) {
    return w.substr(0, w.size() - 1);
  }
  return w;
}

double jaccard_lemma_similarity(std::string_view a, std::string_view b) {
  auto lemmas = [](std::string_view s) {
    std::set<std::string> out;
    for (const auto& t : tokenize(s)) out.insert(lemmatize(t));
    return out;
  };
  const auto x = lemmas(a);
  const auto y = lemmas(b);
  if (x.empty() && y.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& l : x) common += y.count(l);
  return static_cast<double>(common) / static_cast<double>(x.size() + y.size() - common);
}

RepetitionReport repetition_scores(std::string_view text) {
  const auto tokens = tokenize(text);
  return repetition_scores(tokens);
}

RepetitionReport repetition_scores(std::span<const std::string> tokens) {
  RepetitionReport r;
  const auto t = tokens.size();
  if (t == 0) return r;

  for (std::size_t n = 1; n <= kMaxNgram; ++n) {
    if (t < n) break;
    const auto total = t - n + 1;
    std::set<std::vector<std::string>> distinct;
    for (std::size_t i = 0; i < total; ++i) distinct.emplace(tokens.begin() + i, tokens.begin() + i + n);
    r.ngram_overlap[n - 1] = 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(total);
  }

  // A run is a maximal span with period k and length >= 2k.
  std::vector<bool> covered(t, false);
  std::size_t longest = 0;
  for (std::size_t k = 1; 2 * k <= t; ++k) {
    std::size_t j = 0;
    while (j + k < t) {
      if (tokens[j] != tokens[j + k]) {
        ++j;
        continue;
      }
      auto start = j;
      while (j + k < t && tokens[j] == tokens[j + k]) ++j;
      const auto matches = j - start;
      if (matches >= k) {
        const auto len = matches + k;
        longest = std::max(longest, len);
        for (auto i = start; i < start + len; ++i) covered[i] = true;
      }
    }
  }
  const auto total_covered = static_cast<std::size_t>(std::count(covered.begin(), covered.end(), true));
  r.total_consecutive_repetition = static_cast<double>(total_covered) / static_cast<double>(t);
  r.longest_consecutive_repetition = static_cast<double>(longest) / static_cast<double>(t);
  return r;
}

LengthStats length_stats(std::span<const std::pair<std::string, std::string>> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "length statistics need at least one pair");
  LengthStats s;
  for (const auto& [original, edited] : pairs) {
    s.deltas.push_back(static_cast<long long>(text::utf8_length(edited)) -
                       static_cast<long long>(text::utf8_length(original)));
  }
  long long lo = std::llabs(s.deltas.front());
  long long hi = lo;
  for (auto d : s.deltas) {
    lo = std::min(lo, std::llabs(d));
    hi = std::max(hi, std::llabs(d));
  }
  for (auto d : s.deltas) {
    s.normalized_abs.push_back(hi == lo ? 0.0
                                        : static_cast<double>(std::llabs(d) - lo) / static_cast<double>(hi - lo));
  }
  return s;
}

EditReport edit_report(std::string address, std::string_view original, std::string_view edited) {
  EditReport r;
  r.slot_address = std::move(address);
  r.levenshtein = levenshtein(original, edited);
  r.relative_levenshtein = relative_levenshtein(original, edited);
  r.jaccard_lemma = jaccard_lemma_similarity(original, edited);
  r.length_delta = static_cast<long long>(text::utf8_length(edited)) -
                   static_cast<long long>(text::utf8_length(original));
  r.repetition = repetition_scores(edited);
  return r;
}

std::vector<EditReport> session_edit_reports(const StorySession& session) {
  std::vector<EditReport> out;
  for (const auto& address : session.addresses()) {
    const auto& slot = session.slot(address);
    if (!slot.accepted) continue;
    const auto& original = slot.candidates[*slot.accepted].raw_text;
    if (original.empty()) continue;
    out.push_back(edit_report(address.str(), original, resolve_slot_text(slot)));
  }
  return out;
}

std::string format_reports(std::span<const EditReport> reports) {
  std::string out = "slot\tlevenshtein\trelative_levenshtein\tjaccard_lemma\tlength_delta";
  for (std::size_t n = 1; n <= kMaxNgram; ++n) out += fmt::format("\tngram{}", n);
  out += "\ttcr\tlcr\n";
  for (const auto& r : reports) {
    out += fmt::format("{}\t{}\t{:.6f}\t{:.6f}\t{}", r.slot_address, r.levenshtein, r.relative_levenshtein,
                       r.jaccard_lemma, r.length_delta);
    for (double v : r.repetition.ngram_overlap) out += fmt::format("\t{:.6f}", v);
    out += fmt::format("\t{:.6f}\t{:.6f}\n", r.repetition.total_consecutive_repetition,
                       r.repetition.longest_consecutive_repetition);
  }
  return out;
}

}  // namespace dramaturg::metrics
