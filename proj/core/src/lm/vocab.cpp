#include "ctgpt/lm/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "../common/binary_io.hpp"
#include "ctgpt/errors.hpp"

namespace ctgpt::lm {
namespace {

const char* const kSpecialTokens[] = {"<pad>", "<bos>", "<eos>", "<stop>", "<unk>"};

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '-' || c == '\'' || c >= 0x80; }

bool no_space_before(const std::string& t) {
  return t == "." || t == "," || t == ";" || t == ":" || t == "!" || t == "?" || t == ")" || t == "%";
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else if (is_word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
      out.emplace_back(1, static_cast<char>(c));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  bool after_open = false;
  for (const auto& w : words) {
    if (!out.empty() && !after_open && !no_space_before(w)) out.push_back(' ');
    out += w;
    after_open = w == "(";
  }
  return out;
}

std::string normalize_text(std::string_view text) {
  auto words = split_words(text);
  return join_words(words);
}

void Vocab::add(std::string token) {
  const auto id = static_cast<std::int64_t>(tokens_.size());
  if (!ids_.emplace(token, id).second) throw FormatError("vocab: duplicate token '" + token + "'");
  tokens_.push_back(std::move(token));
}

Vocab Vocab::build(std::span<const std::string> corpus) {
  if (corpus.empty()) throw ArgumentError("build_vocab: empty corpus");
  std::set<std::string> words;
  for (const auto& text : corpus) {
    for (auto& w : split_words(text)) words.insert(std::move(w));
  }
  Vocab v;
  for (const char* s : kSpecialTokens) v.add(s);
  for (const auto& w : words) {
    if (!v.contains(w)) v.add(w);
  }
  return v;
}

bool Vocab::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

std::int64_t Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ArgumentError("vocab: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int64_t> Vocab::encode(std::string_view text) const {
  std::vector<std::int64_t> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> Vocab::decode_tokens(std::span<const std::int64_t> ids) const {
  std::vector<std::string> words;
  for (auto i : ids) {
    if (i == kImageSentinel) {
      words.emplace_back("<image>");
    } else if (i == kUnkId || i >= kNumSpecials) {
      words.push_back(token(i));
    }
  }
  return words;
}

std::string Vocab::decode(std::span<const std::int64_t> ids) const {
  auto words = decode_tokens(ids);
  return join_words(words);
}

std::string Vocab::to_tsv() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\t';
    out += std::to_string(i);
    out += '\n';
  }
  return out;
}

Vocab Vocab::from_tsv(std::string_view text) {
  Vocab v;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw FormatError("vocab line " + std::to_string(lineno) + ": missing tab");
    std::int64_t id = 0;
    try {
      id = std::stoll(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw FormatError("vocab line " + std::to_string(lineno) + ": bad id");
    }
    if (id != static_cast<std::int64_t>(v.tokens_.size())) {
      throw FormatError("vocab line " + std::to_string(lineno) + ": ids must be dense and ordered");
    }
    v.add(line.substr(0, tab));
  }
  for (std::int64_t i = 0; i < kNumSpecials; ++i) {
    if (static_cast<std::size_t>(i) >= v.tokens_.size() || v.tokens_[i] != kSpecialTokens[i]) {
      throw FormatError("vocab: special tokens missing or out of place");
    }
  }
  return v;
}

void Vocab::save(const std::filesystem::path& path) const { detail::write_file(path.string(), to_tsv()); }

Vocab Vocab::load(const std::filesystem::path& path) { return from_tsv(detail::read_file(path.string())); }

}  // namespace ctgpt::lm
