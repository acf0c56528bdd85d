// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Toy vocabulary and the two prompt layouts.
///
/// Token ids: 0 <bos>, 1 <eos>, 2 yes, 3 no, then the prompt words, then one
/// token per object (surface = canonical name), then one visual token per
/// object, then unused filler up to the requested size.
///
///     caption:  <bos> <vis:o1> ... <vis:on> please describe the image in detail .
///     question: <bos> <vis:o1> ... <vis:on> is there a <object> ?

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "lisa/engine.hpp"
#include "lisa/harness/corpus.hpp"

namespace lisa::harness {

inline const std::vector<std::string>& prompt_words() {
  static const std::vector<std::string> w{"please", "describe", "the", "image", "in", "detail", ".", "is", "there", "a", "?"};
  return w;
}

class Vocabulary {
 public:
  static constexpr TokenId kBos = 0, kEos = 1, kYes = 2, kNo = 3;

  Vocabulary() = default;

  Vocabulary(const metrics::Lexicon& lex, std::size_t min_size) : num_objects_(lex.size()) {
    tokens_ = {"<bos>", "<eos>", "yes", "no"};
    for (const auto& w : prompt_words()) {
      words_[w] = static_cast<TokenId>(tokens_.size());
      tokens_.push_back(w);
    }
    object_base_ = static_cast<TokenId>(tokens_.size());
    for (const auto& n : lex.names()) tokens_.push_back(n);
    visual_base_ = static_cast<TokenId>(tokens_.size());
    for (const auto& n : lex.names()) tokens_.push_back("<vis:" + n + ">");
    for (std::size_t i = 0; tokens_.size() < min_size; ++i) tokens_.push_back("<unused" + std::to_string(i) + ">");
  }

  std::size_t size() const { return tokens_.size(); }
  std::size_t num_objects() const { return num_objects_; }
  const std::string& text(TokenId t) const { return tokens_.at(t); }

  TokenId word(const std::string& w) const {
    auto it = words_.find(w);
    if (it == words_.end()) throw ValidationError("vocabulary has no word '" + w + "'");
    return it->second;
  }
  TokenId object_token(ObjectId o) const { return object_base_ + o; }
  TokenId visual_token(ObjectId o) const { return visual_base_ + o; }
  bool is_object(TokenId t) const { return t >= object_base_ && t < object_base_ + num_objects_; }
  ObjectId object_of(TokenId t) const { return t - object_base_; }

  /// Space-joined surface forms of the generated tokens, stopping at <eos>.
  std::string detokenize(std::span<const TokenId> tokens) const {
    std::string s;
    for (TokenId t : tokens) {
      if (t == kEos) break;
      if (t == kBos) continue;
      if (!s.empty()) s.push_back(' ');
      s += text(t);
    }
    return s;
  }

  std::vector<TokenId> visual_prefix(std::span<const ObjectId> objects) const {
    std::vector<TokenId> p{kBos};
    for (ObjectId o : objects) p.push_back(visual_token(o));
    return p;
  }

  std::vector<TokenId> caption_prompt(std::span<const ObjectId> objects) const {
    auto p = visual_prefix(objects);
    for (const char* w : {"please", "describe", "the", "image", "in", "detail", "."}) p.push_back(word(w));
    return p;
  }

  /// Question tokens shared by every object query about one scene.
  std::vector<TokenId> question_prefix(std::span<const ObjectId> objects) const {
    auto p = visual_prefix(objects);
    for (const char* w : {"is", "there", "a"}) p.push_back(word(w));
    return p;
  }

  std::vector<TokenId> question_suffix(ObjectId queried) const { return {object_token(queried), word("?")}; }

  std::vector<TokenId> question(std::span<const ObjectId> objects, ObjectId queried) const {
    auto p = question_prefix(objects);
    for (TokenId t : question_suffix(queried)) p.push_back(t);
    return p;
  }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, TokenId> words_;
  std::size_t num_objects_ = 0;
  TokenId object_base_ = 0;
  TokenId visual_base_ = 0;
};

}  // namespace lisa::harness
