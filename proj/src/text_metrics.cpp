// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The BudgetLeak Authors

#include "budgetleak/text_metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_map>

#include "budgetleak/error.hpp"

namespace budgetleak::metrics {

namespace {

constexpr std::array<MetricId, 6> kAllMetrics = {MetricId::Cosine, MetricId::Rouge1,
                                                 MetricId::Rouge2, MetricId::RougeL,
                                                 MetricId::Bleu,   MetricId::Edit};

// Decodes one code point starting at s[i]; advances i. Malformed sequences
// decode byte-by-byte into the U+DC80..U+DCFF range so every input byte
// survives a decode/encode round trip.
char32_t next_codepoint(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto fallback = [&] {
    ++i;
    return static_cast<char32_t>(0xDC00 + b0);
  };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  std::size_t len;
  char32_t cp;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return fallback();
  }
  if (i + len > s.size()) return fallback();
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return fallback();
    cp = (cp << 6) | (b & 0x3F);
  }
  static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return fallback();
  i += len;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp >= 0xDC80 && cp <= 0xDCFF) {
    out.push_back(static_cast<char>(cp - 0xDC00));
  } else if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Separators: ASCII non-alphanumerics, Latin-1 punctuation and symbols,
// general punctuation, arrows/math/technical symbols, CJK punctuation and the
// ASCII-equivalent fullwidth forms.
bool is_separator(char32_t cp) {
  if (cp < 0x80) {
    return !((cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z'));
  }
  if (cp >= 0xDC80 && cp <= 0xDCFF) return true;  // malformed byte
  if (cp <= 0xBF) return cp != 0xAA && cp != 0xB5 && cp != 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return true;
  if (cp >= 0x2000 && cp <= 0x2BFF) return true;
  if (cp >= 0x3000 && cp <= 0x303F) return true;
  if (cp >= 0xFE30 && cp <= 0xFE4F) return true;
  if ((cp >= 0xFF00 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20) ||
      (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65)) {
    return true;
  }
  return cp == 0xFEFF || cp == 0xFFFD;
}

// Simple case folding for ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic.
char32_t fold_codepoint(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp < 0xC0) return cp;
  if (cp <= 0xDE) return cp == 0xD7 ? cp : cp + 32;
  if (cp >= 0x100 && cp <= 0x17F) {
    if (cp == 0x130) return 'i';
    if (cp == 0x178) return 0xFF;
    if ((cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E)) {
      return (cp % 2 == 1) ? cp + 1 : cp;
    }
    if (cp == 0x131 || cp == 0x138 || cp == 0x149 || cp == 0x17F) return cp;
    return (cp % 2 == 0) ? cp + 1 : cp;
  }
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 32;
  if (cp == 0x386) return 0x3AC;
  if (cp >= 0x388 && cp <= 0x38A) return cp + 37;
  if (cp == 0x38C) return 0x3CC;
  if (cp == 0x38E || cp == 0x38F) return cp + 63;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
  return cp;
}

template <typename OnToken>
void scan_tokens(std::string_view text, OnToken&& on_token) {
  std::size_t i = 0;
  std::size_t start = 0;
  bool in_token = false;
  while (i < text.size()) {
    const std::size_t at = i;
    const char32_t cp = next_codepoint(text, i);
    if (is_separator(cp)) {
      if (in_token && !on_token(start, at)) return;
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      start = at;
    }
  }
  if (in_token) on_token(start, text.size());
}

std::vector<char32_t> decode(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) out.push_back(next_codepoint(s, i));
  return out;
}

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts count_ngrams(const TokenSequence& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  counts.reserve(tokens.size() - n + 1);
  std::string key;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    key.clear();
    for (std::size_t k = 0; k < n; ++k) {
      if (k) key.push_back('\x1f');
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

std::size_t clipped_overlap(const NgramCounts& candidate, const NgramCounts& reference) {
  std::size_t overlap = 0;
  for (const auto& [gram, count] : candidate) {
    if (auto it = reference.find(gram); it != reference.end()) overlap += std::min(count, it->second);
  }
  return overlap;
}

}  // namespace

std::string_view to_string(MetricId id) {
  switch (id) {
    case MetricId::Cosine: return "cosine";
    case MetricId::Rouge1: return "rouge1";
    case MetricId::Rouge2: return "rouge2";
    case MetricId::RougeL: return "rougeL";
    case MetricId::Bleu: return "bleu";
    case MetricId::Edit: return "edit";
  }
  return "?";
}

std::optional<MetricId> parse_metric(std::string_view name) {
  for (MetricId id : kAllMetrics) {
    if (to_string(id) == name) return id;
  }
  return std::nullopt;
}

std::pair<double, double> metric_range(MetricId id) {
  return id == MetricId::Cosine ? std::pair{-1.0, 1.0} : std::pair{0.0, 1.0};
}

std::span<const MetricId> all_metrics() { return kAllMetrics; }

TokenSequence tokenize(std::string_view text) {
  TokenSequence tokens;
  scan_tokens(text, [&](std::size_t begin, std::size_t end) {
    std::string token;
    token.reserve(end - begin);
    std::size_t i = begin;
    while (i < end) append_utf8(token, fold_codepoint(next_codepoint(text, i)));
    tokens.push_back(std::move(token));
    return true;
  });
  return tokens;
}

std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  scan_tokens(text, [&](std::size_t, std::size_t) {
    ++n;
    return true;
  });
  return n;
}

std::string_view truncate_tokens(std::string_view text, std::size_t max_tokens) {
  if (max_tokens == 0) return text.substr(0, 0);
  std::size_t n = 0;
  std::size_t cut = text.size();
  scan_tokens(text, [&](std::size_t, std::size_t end) {
    if (++n == max_tokens) {
      cut = end;
      return false;
    }
    return true;
  });
  return text.substr(0, cut);
}

double rouge_n(const TokenSequence& candidate, const TokenSequence& reference, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "rouge_n: n must be >= 1");
  if (reference.size() < n) return 0.0;
  const std::size_t total = reference.size() - n + 1;
  const auto overlap = clipped_overlap(count_ngrams(candidate, n), count_ngrams(reference, n));
  return static_cast<double>(overlap) / static_cast<double>(total);
}

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const TokenSequence& candidate, const TokenSequence& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double recall = lcs / static_cast<double>(reference.size());
  const double precision = lcs / static_cast<double>(candidate.size());
  return 2.0 * precision * recall / (precision + recall);
}

double bleu(const TokenSequence& candidate, const TokenSequence& reference, std::size_t max_n) {
  if (max_n == 0) throw Error(ErrorKind::InvalidArgument, "bleu: max_n must be >= 1");
  if (candidate.empty() || reference.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const std::size_t cand_total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
    const std::size_t matches =
        cand_total ? clipped_overlap(count_ngrams(candidate, n), count_ngrams(reference, n)) : 0;
    double precision;
    if (matches > 0) {
      precision = static_cast<double>(matches) / static_cast<double>(cand_total);
    } else if (n == 1) {
      return 0.0;
    } else {
      precision = 1.0 / (2.0 * static_cast<double>(std::max<std::size_t>(cand_total, 1)));
    }
    log_sum += std::log(precision);
  }
  const double geo_mean = std::exp(log_sum / static_cast<double>(max_n));
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double brevity = c < r ? std::exp(1.0 - r / c) : 1.0;
  return std::clamp(brevity * geo_mean, 0.0, 1.0);
}

std::size_t edit_distance(std::string_view candidate, std::string_view reference) {
  const auto a = decode(candidate);
  const auto b = decode(reference);
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double edit_similarity(std::string_view candidate, std::string_view reference) {
  const std::size_t longest = std::max(decode(candidate).size(), decode(reference).size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(candidate, reference)) / static_cast<double>(longest);
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dim() != v.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "cosine_similarity: dimension mismatch (" +
                                                  std::to_string(u.dim()) + " vs " +
                                                  std::to_string(v.dim()) + ")");
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.dim(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) {
    throw Error(ErrorKind::ZeroVector, "cosine_similarity: zero vector (embedder failure?)");
  }
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

ReferenceText prepare_reference(std::string_view reference, const Embedder* embedder) {
  ReferenceText ref{std::string(reference), tokenize(reference), std::nullopt};
  if (embedder && !ref.tokens.empty()) ref.embedding = embedder->embed(reference);
  return ref;
}

std::vector<double> score_against(std::string_view candidate, const ReferenceText& reference,
                                  const Embedder& embedder, std::span<const MetricId> metric_set) {
  if (metric_set.empty()) throw Error(ErrorKind::InvalidArgument, "metric_vector: empty metric set");
  const TokenSequence tokens = tokenize(candidate);
  std::vector<double> values;
  values.reserve(metric_set.size());
  for (MetricId id : metric_set) {
    switch (id) {
      case MetricId::Cosine: {
        // An empty response carries no semantic content; the hashed embedder
        // would map it to the zero vector.
        if (tokens.empty()) {
          values.push_back(0.0);
          break;
        }
        const EmbeddingVector ref_vec =
            reference.embedding ? *reference.embedding : embedder.embed(reference.text);
        values.push_back(cosine_similarity(embedder.embed(candidate), ref_vec));
        break;
      }
      case MetricId::Rouge1: values.push_back(rouge_n(tokens, reference.tokens, 1)); break;
      case MetricId::Rouge2: values.push_back(rouge_n(tokens, reference.tokens, 2)); break;
      case MetricId::RougeL: values.push_back(rouge_l(tokens, reference.tokens)); break;
      case MetricId::Bleu: values.push_back(bleu(tokens, reference.tokens)); break;
      case MetricId::Edit: values.push_back(edit_similarity(candidate, reference.text)); break;
    }
  }
  return values;
}

MetricVector metric_vector(std::string_view candidate, std::string_view reference,
                           const Embedder& embedder, std::span<const MetricId> metric_set) {
  const ReferenceText ref = prepare_reference(reference, nullptr);
  return MetricVector{{metric_set.begin(), metric_set.end()},
                      score_against(candidate, ref, embedder, metric_set)};
}

}  // namespace budgetleak::metrics
