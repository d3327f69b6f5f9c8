#include "vlwb/vocab.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <stdexcept>
#include <utility>

namespace vlwb::data {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  std::erase(words, std::string(kUnkWord));
  words_.reserve(words.size() + 1);
  words_.emplace_back(kUnkWord);
  for (auto& w : words) words_.push_back(std::move(w));
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
}

std::size_t Vocabulary::id(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::encode(std::string_view text) const {
  std::vector<std::size_t> ids;
  for (const auto& w : tokenize(text)) ids.push_back(id(w));
  return ids;
}

std::size_t Vocabulary::count_unknown(std::string_view text) const {
  const auto ids = encode(text);
  return static_cast<std::size_t>(std::count(ids.begin(), ids.end(), kUnk));
}

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
  const auto first = text_.find("{}");
  if (first == std::string::npos || text_.find("{}", first + 2) != std::string::npos) {
    throw std::invalid_argument("prompt template must contain exactly one {} placeholder: \"" +
                                text_ + "\"");
  }
  slot_ = first;
}

std::string PromptTemplate::instantiate(std::string_view filler) const {
  std::string out = text_.substr(0, slot_);
  out += filler;
  out += text_.substr(slot_ + 2);
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::size_t ClassVocab::index_of(std::string_view name) const {
  const auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) throw std::invalid_argument("unknown class: " + std::string(name));
  return static_cast<std::size_t>(it - classes.begin());
}

namespace {

constexpr std::array<std::pair<std::string_view, std::string_view>, 8> kContexts{{
    {"circle", "there is a circle in the image"},
    {"square", "there is a square in the image"},
    {"triangle", "there is a triangle in the image"},
    {"cross", "there is a cross in the image"},
    {"ring", "there is a ring in the image"},
    {"bar", "there is a bar in the image"},
    {"diamond", "there is a diamond in the image"},
    {"dot", "there is a dot in the image"},
}};

}  // namespace

std::string class_context(std::string_view cls) {
  for (const auto& [name, sentence] : kContexts) {
    if (name == cls) return std::string(sentence);
  }
  throw std::invalid_argument("no built-in context for class: " + std::string(cls));
}

ClassVocab build_class_contexts(const std::vector<std::string>& classes) {
  ClassVocab vocab;
  for (const auto& c : classes) {
    vocab.classes.push_back(c);
    vocab.contexts.push_back(class_context(c));
  }
  return vocab;
}

}  // namespace vlwb::data
