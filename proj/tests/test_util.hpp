#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "sparsent/corpus.hpp"
#include "sparsent/labels.hpp"

namespace testutil {

inline std::string data_path(const std::string& name) { return std::string(SPARSENT_TEST_DATA) + "/" + name; }

// "IL-2/NN gene/NN expression/NN" → sentence with surface/POS tokens.
inline sparsent::Sentence tagged(const std::string& text, sparsent::SentenceId id = 0) {
  sparsent::Sentence s;
  s.id = id;
  std::istringstream in(text);
  std::string item;
  while (in >> item) {
    auto slash = item.rfind('/');
    s.tokens.push_back({item.substr(0, slash), item.substr(slash + 1), std::nullopt, std::nullopt, std::nullopt});
  }
  return s;
}

// Sentence with human labels given as a BIO string, e.g. "BOO".
inline sparsent::Sentence labeled(const std::string& text, const std::string& bio, sparsent::SentenceId id = 0) {
  auto s = tagged(text, id);
  s.state = sparsent::SentenceState::HumanLabeled;
  s.working = sparsent::labels_from_string(bio);
  return s;
}

// Every label sequence of length t, in lexicographic B<I<O order.
inline std::vector<sparsent::LabelSeq> all_sequences(std::size_t t) {
  std::vector<sparsent::LabelSeq> out;
  sparsent::LabelSeq cur(t, sparsent::Label::B);
  std::size_t total = 1;
  for (std::size_t i = 0; i < t; ++i) total *= sparsent::kNumLabels;
  for (std::size_t k = 0; k < total; ++k) {
    std::size_t x = k;
    for (std::size_t i = t; i-- > 0;) {
      cur[i] = sparsent::kAllLabels[x % sparsent::kNumLabels];
      x /= sparsent::kNumLabels;
    }
    out.push_back(cur);
  }
  return out;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("sparsent_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
