#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace xling {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

// Symbolic token strings with a unique id each.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  // Throws DataError if the string is already present.
  TokenId add(const std::string& token);
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  // Throws DataError if absent.
  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenSequence encode(const std::vector<std::string>& tokens) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace xling
