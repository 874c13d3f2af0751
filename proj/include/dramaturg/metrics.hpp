#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dramaturg/story_model.hpp"

namespace dramaturg::metrics {

/// Character-level (code point) edit distance with unit insert/delete/substitute.
std::size_t levenshtein(std::string_view a, std::string_view b);

/// levenshtein(original, edited) / length(original); throws EmptyOriginal.
double relative_levenshtein(std::string_view original, std::string_view edited);

/// Lowercased word tokens; whitespace and ASCII punctuation separate words.
std::vector<std::string> tokenize(std::string_view text);

std::string lemmatize(std::string_view token);

/// |A ∩ B| / |A ∪ B| over lemma sets; 1.0 when both are empty.
double jaccard_lemma_similarity(std::string_view a, std::string_view b);

inline constexpr std::size_t kMaxNgram = 10;

struct RepetitionReport {
  /// ngram_overlap[n - 1] for n in 1..10.
  std::array<double, kMaxNgram> ngram_overlap{};
  double total_consecutive_repetition = 0.0;
  double longest_consecutive_repetition = 0.0;

  friend bool operator==(const RepetitionReport&, const RepetitionReport&) = default;
};

RepetitionReport repetition_scores(std::string_view text);
RepetitionReport repetition_scores(std::span<const std::string> tokens);

struct LengthStats {
  std::vector<long long> deltas;          // edited - original, in characters
  std::vector<double> normalized_abs;     // min-max scaled |delta|
};

LengthStats length_stats(std::span<const std::pair<std::string, std::string>> pairs);

struct EditReport {
  std::string slot_address;
  std::size_t levenshtein = 0;
  double relative_levenshtein = 0.0;
  double jaccard_lemma = 1.0;
  long long length_delta = 0;
  RepetitionReport repetition;
};

EditReport edit_report(std::string address, std::string_view original, std::string_view edited);

/// One row per slot whose resolved text derives from an accepted candidate.
std::vector<EditReport> session_edit_reports(const StorySession& session);

/// Tab-separated rows with a header line.
std::string format_reports(std::span<const EditReport> reports);

}  // namespace dramaturg::metrics
