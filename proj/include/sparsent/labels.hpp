#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sparsent {

// Single-class BIO tags. The numeric order is also the tie-breaking order.
enum class Label : std::uint8_t { B = 0, I = 1, O = 2 };

inline constexpr std::size_t kNumLabels = 3;
inline constexpr Label kAllLabels[kNumLabels] = {Label::B, Label::I, Label::O};

using LabelSeq = std::vector<Label>;

inline constexpr std::size_t index_of(Label y) { return static_cast<std::size_t>(y); }

inline char to_char(Label y) {
  switch (y) {
    case Label::B: return 'B';
    case Label::I: return 'I';
    case Label::O: return 'O';
  }
  return '?';
}

inline Label label_from_char(char c) {
  switch (c) {
    case 'B': return Label::B;
    case 'I': return Label::I;
    case 'O': return Label::O;
    default: throw std::invalid_argument(std::string("not a BIO label: ") + c);
  }
}

inline std::string to_string(const LabelSeq& seq) {
  std::string out;
  out.reserve(seq.size());
  for (Label y : seq) out.push_back(to_char(y));
  return out;
}

inline LabelSeq labels_from_string(std::string_view s) {
  LabelSeq out;
  out.reserve(s.size());
  for (char c : s) out.push_back(label_from_char(c));
  return out;
}

inline LabelSeq all_outside(std::size_t n) { return LabelSeq(n, Label::O); }

// I never follows O or the sentence start.
inline bool is_valid_bio(const LabelSeq& seq) {
  Label prev = Label::O;
  for (Label y : seq) {
    if (y == Label::I && prev == Label::O) return false;
    prev = y;
  }
  return true;
}

// Turns a stray I (after O or at the start) into B, the usual conlleval reading.
inline LabelSeq repair_bio(LabelSeq seq) {
  Label prev = Label::O;
  for (Label& y : seq) {
    if (y == Label::I && prev == Label::O) y = Label::B;
    prev = y;
  }
  return seq;
}

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive

  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
};

inline std::vector<Span> spans_of(const LabelSeq& raw) {
  const LabelSeq seq = repair_bio(raw);
  std::vector<Span> out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] != Label::B) continue;
    std::size_t j = i + 1;
    while (j < seq.size() && seq[j] == Label::I) ++j;
    out.push_back({i, j});
  }
  return out;
}

inline std::size_t entity_count(const LabelSeq& seq) { return spans_of(seq).size(); }

// Spans must be in bounds and pairwise disjoint.
inline LabelSeq labels_from_spans(std::size_t length, const std::vector<Span>& spans) {
  LabelSeq seq(length, Label::O);
  for (const Span& s : spans) {
    if (s.start >= s.end || s.end > length)
      throw std::out_of_range("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                              ") outside sentence of length " + std::to_string(length));
    for (std::size_t i = s.start; i < s.end; ++i) {
      if (seq[i] != Label::O) throw std::invalid_argument("overlapping spans");
      seq[i] = i == s.start ? Label::B : Label::I;
    }
  }
  return seq;
}

// IO export drops the B/I distinction; adjacent entities merge.
inline std::vector<std::string> to_io_tags(const LabelSeq& seq, const std::string& entity_class) {
  std::vector<std::string> out;
  out.reserve(seq.size());
  for (Label y : seq) out.push_back(y == Label::O ? "O" : "I-" + entity_class);
  return out;
}

inline std::vector<std::string> to_bio_tags(const LabelSeq& seq, const std::string& entity_class) {
  std::vector<std::string> out;
  out.reserve(seq.size());
  for (Label y : repair_bio(seq)) {
    if (y == Label::O)
      out.emplace_back("O");
    else
      out.push_back(std::string(1, to_char(y)) + "-" + entity_class);
  }
  return out;
}

}  // namespace sparsent
