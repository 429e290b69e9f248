#include "xling/vocab.hpp"

#include "xling/error.hpp"

namespace xling {

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  tokens_.reserve(tokens.size());
  for (auto& t : tokens) add(t);
}

TokenId Vocabulary::add(const std::string& token) {
  const auto id = static_cast<TokenId>(tokens_.size());
  if (!index_.emplace(token, id).second) throw DataError("token '" + token + "' already exists");
  tokens_.push_back(token);
  return id;
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw DataError("unknown token '" + token + "'");
  return it->second;
}

TokenSequence Vocabulary::encode(const std::vector<std::string>& tokens) const {
  TokenSequence out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

}  // namespace xling
