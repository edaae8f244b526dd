#include "disp/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "disp/error.hpp"
#include "disp/random.hpp"

namespace disp {
namespace {

bool is_space(unsigned char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

bool is_punct(unsigned char c) noexcept {
  return c < 0x80 && std::ispunct(c) != 0;
}

bool is_alpha(unsigned char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\r') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

std::uint64_t hash_corpus(const std::vector<Token>& tokens, const std::vector<float>& vectors,
                          std::size_t dim) {
  std::uint64_t h = fnv1a64(std::to_string(tokens.size()) + " " + std::to_string(dim));
  for (const auto& t : tokens) {
    h = fnv1a64(t.str(), h);
    h = fnv1a64(std::string_view("\n", 1), h);
  }
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(vectors.data()),
                                  vectors.size() * sizeof(float)),
                 h);
}

}  // namespace

Token::Token(std::string surface) : surface_(std::move(surface)) {
  if (surface_.empty()) throw DataError("token surface is empty");
  for (unsigned char c : surface_) {
    if (is_space(c)) throw DataError("token surface contains whitespace: '" + surface_ + "'");
  }
}

bool Token::is_alphabetic() const noexcept {
  return std::all_of(surface_.begin(), surface_.end(),
                     [](unsigned char c) { return is_alpha(c); });
}

std::string_view to_string(AttackKind kind) noexcept {
  switch (kind) {
    case AttackKind::Insertion: return "insertion";
    case AttackKind::Deletion: return "deletion";
    case AttackKind::Swap: return "swap";
    case AttackKind::Random: return "random";
    case AttackKind::Embed: return "embed";
  }
  return "unknown";
}

AttackKind parse_attack_kind(std::string_view name) {
  for (AttackKind k : kAllAttackKinds) {
    if (to_string(k) == name) return k;
  }
  throw DataError("unknown attack kind: " + std::string(name));
}

bool is_character_level(AttackKind kind) noexcept {
  return kind == AttackKind::Insertion || kind == AttackKind::Deletion || kind == AttackKind::Swap;
}

std::string Document::text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i].str();
  }
  return out;
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i) break;

    std::string chunk(text.substr(i, j - i));
    for (auto& c : chunk) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    std::size_t lo = 0;
    std::size_t hi = chunk.size();
    while (lo < hi && is_punct(static_cast<unsigned char>(chunk[lo]))) ++lo;
    while (hi > lo && is_punct(static_cast<unsigned char>(chunk[hi - 1]))) --hi;

    for (std::size_t p = 0; p < lo; ++p) out.emplace_back(std::string(1, chunk[p]));
    if (hi > lo) out.emplace_back(chunk.substr(lo, hi - lo));
    for (std::size_t p = hi; p < chunk.size(); ++p) {
      if (p >= lo) out.emplace_back(std::string(1, chunk[p]));
    }
    i = j;
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, int num_classes, Split split) {
  if (num_classes < 2) throw DataError("num_classes must be at least 2");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset: " + path.string());

  Dataset ds;
  ds.num_classes = num_classes;
  ds.split = split;
  const std::string source = path.string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(source, line_no, "missing TAB separator");
    const std::string_view label_text(line.data(), tab);
    int label = 0;
    const auto [ptr, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
    if (ec != std::errc() || ptr != label_text.data() + label_text.size() || label_text.empty()) {
      throw ParseError(source, line_no, "non-integer label '" + std::string(label_text) + "'");
    }
    if (label < 0 || label >= num_classes) {
      throw ParseError(source, line_no,
                       "label " + std::to_string(label) + " out of range for " +
                           std::to_string(num_classes) + " classes");
    }
    auto tokens = tokenize(std::string_view(line).substr(tab + 1));
    if (tokens.empty()) throw ParseError(source, line_no, "empty document");
    ds.documents.push_back(Document{std::to_string(line_no - 1), label, std::move(tokens)});
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset: " + path.string());
  for (const auto& doc : dataset.documents) out << doc.label << '\t' << doc.text() << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

EmbeddingCorpus::EmbeddingCorpus(std::vector<Token> tokens, std::vector<float> vectors,
                                 std::size_t dim)
    : tokens_(std::move(tokens)), vectors_(std::move(vectors)), dim_(dim) {
  if (dim_ == 0) throw DataError("embedding dimension must be positive");
  if (vectors_.size() != tokens_.size() * dim_) {
    throw DataError("embedding matrix size does not match n x k");
  }
  for (float v : vectors_) {
    if (!std::isfinite(v)) throw DataError("embedding contains a non-finite value");
  }
  rows_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!rows_.emplace(tokens_[i].str(), i).second) {
      throw DataError("duplicate token in corpus: " + tokens_[i].str());
    }
  }
  hash_ = hash_corpus(tokens_, vectors_, dim_);
}

std::optional<std::size_t> EmbeddingCorpus::lookup(std::string_view surface) const {
  const auto it = rows_.find(std::string(surface));
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

EmbeddingCorpus load_embedding_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding corpus: " + path.string());
  const std::string source = path.string();

  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  const auto header = split_fields(line);
  std::size_t n = 0;
  std::size_t k = 0;
  auto parse_size = [](std::string_view f, std::size_t& out) {
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), out);
    return ec == std::errc() && ptr == f.data() + f.size();
  };
  if (header.size() != 2 || !parse_size(header[0], n) || !parse_size(header[1], k) || k == 0) {
    throw ParseError(source, 1, "malformed header, expected \"n k\"");
  }

  std::vector<Token> tokens;
  std::vector<float> vectors;
  tokens.reserve(n);
  vectors.reserve(n * k);
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t line_no = 1;
  while (tokens.size() < n && std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty()) throw ParseError(source, line_no, "empty row");
    if (fields.size() != k + 1) {
      throw ParseError(source, line_no,
                       "dimension mismatch: expected " + std::to_string(k) + " values, found " +
                           std::to_string(fields.size() - 1));
    }
    std::string surface(fields[0]);
    if (!seen.emplace(surface, line_no).second) {
      throw ParseError(source, line_no, "duplicate token '" + surface + "'");
    }
    for (std::size_t c = 1; c <= k; ++c) {
      float v = 0.0f;
      const auto f = fields[c];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw ParseError(source, line_no, "invalid number '" + std::string(f) + "'");
      }
      if (!std::isfinite(v)) throw ParseError(source, line_no, "non-finite value");
      vectors.push_back(v);
    }
    tokens.emplace_back(std::move(surface));
  }
  if (tokens.size() != n) {
    throw ParseError(source, line_no,
                     "header declares " + std::to_string(n) + " rows, found " +
                         std::to_string(tokens.size()));
  }
  return EmbeddingCorpus(std::move(tokens), std::move(vectors), k);
}

void save_embedding_corpus(const EmbeddingCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embedding corpus: " + path.string());
  out << corpus.size() << ' ' << corpus.dim() << '\n';
  char buf[64];
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    out << corpus.token(r).str();
    for (float v : corpus.vector(r)) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), v);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Vocabulary::Vocabulary(std::vector<std::string> regular_tokens) : regular_(std::move(regular_tokens)) {
  ids_.reserve(regular_.size());
  for (std::size_t i = 0; i < regular_.size(); ++i) {
    if (!ids_.emplace(regular_[i], static_cast<int>(i) + kNumSpecialTokens).second) {
      throw DataError("duplicate vocabulary token: " + regular_[i]);
    }
  }
}

Vocabulary Vocabulary::from_dataset(const Dataset& dataset, std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : dataset.documents) {
    for (const auto& t : doc.tokens) ++counts[t.str()];
  }
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (max_size != 0 && ordered.size() > max_size) ordered.resize(max_size);
  std::vector<std::string> tokens;
  tokens.reserve(ordered.size());
  for (auto& [tok, _] : ordered) tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

int Vocabulary::id(std::string_view surface) const {
  const auto it = ids_.find(std::string(surface));
  return it == ids_.end() ? kSpecialTokens.unk : it->second;
}

std::vector<int> Vocabulary::encode(std::span<const Token> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t.str()));
  return ids;
}

}  // namespace disp
