#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vlwb::data {

/// Lower-cases and splits on anything that is not a letter or digit.
std::vector<std::string> tokenize(std::string_view text);

/// Closed word list; id 0 is the reserved unknown token.
class Vocabulary {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::string_view kUnkWord = "<unk>";

  Vocabulary();
  /// Sorted, de-duplicated word list; `<unk>` is prepended.
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const noexcept { return words_.size(); }
  std::size_t id(std::string_view word) const;
  const std::string& word(std::size_t id) const { return words_.at(id); }
  bool contains(std::string_view word) const { return id(word) != kUnk; }
  const std::vector<std::string>& words() const noexcept { return words_; }

  std::vector<std::size_t> encode(std::string_view text) const;
  std::size_t count_unknown(std::string_view text) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Text with exactly one `{}` placeholder.
class PromptTemplate {
 public:
  explicit PromptTemplate(std::string text);
  const std::string& text() const noexcept { return text_; }
  std::string instantiate(std::string_view filler) const;

 private:
  std::string text_;
  std::size_t slot_ = 0;
};

struct PromptTemplates {
  PromptTemplate classification{"a photo of {}"};
  PromptTemplate existence{"is there a {} in this image?"};
  /// What the answerer is asked in classification mode; no placeholder needed,
  /// the `{}` receives the optional context sentence.
  PromptTemplate question{"what is the main object in this image? {}"};
  PromptTemplate caption{"describe this image in a short sentence. {}"};
};

/// Class names with one context sentence each, plus the prompt templates.
struct ClassVocab {
  std::vector<std::string> classes;
  std::vector<std::string> contexts;
  PromptTemplates templates;

  std::size_t size() const noexcept { return classes.size(); }
  std::size_t index_of(std::string_view name) const;  // throws if absent
  const std::string& context(std::size_t cls) const { return contexts.at(cls); }
};

/// Table lookup of the built-in one-sentence description of every class.
/// Throws std::invalid_argument on an unknown class name.
ClassVocab build_class_contexts(const std::vector<std::string>& classes);
std::string class_context(std::string_view cls);

}  // namespace vlwb::data
