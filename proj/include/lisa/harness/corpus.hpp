// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Synthetic scene corpus with a built-in object lexicon.
///
/// Objects come in partner pairs (2i, 2i + 1). A scene is filled by drawing
/// absent objects uniformly; whenever a drawn object's partner is absent and
/// there is room for both, the partner joins with probability
/// `bias_strength`. Each scene's bias set holds the absent objects with the
/// highest summed co-occurrence with its present objects.

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lisa/errors.hpp"
#include "lisa/metrics.hpp"
#include "lisa/tensor.hpp"

namespace lisa::harness {

using metrics::ObjectId;

struct ObjectEntry {
  const char* name;
  std::vector<std::string> synonyms;
};

/// Object names in partner order; lexicons use a prefix of this table.
inline const std::vector<ObjectEntry>& builtin_objects() {
  static const std::vector<ObjectEntry> table{
      {"dog", {"dogs", "puppy", "puppies"}},
      {"frisbee", {"frisbees"}},
      {"dining table", {"dining tables"}},
      {"chair", {"chairs"}},
      {"car", {"cars"}},
      {"traffic light", {"traffic lights", "stoplight"}},
      {"person", {"people", "persons", "man", "men", "woman", "women"}},
      {"bicycle", {"bicycles", "bike", "bikes"}},
      {"cat", {"cats", "kitten"}},
      {"couch", {"couches", "sofa", "sofas"}},
      {"toothbrush", {"toothbrushes"}},
      {"sink", {"sinks"}},
      {"laptop", {"laptops"}},
      {"keyboard", {"keyboards"}},
      {"tennis racket", {"tennis rackets", "racket"}},
      {"sports ball", {"ball", "balls"}},
      {"cup", {"cups", "mug"}},
      {"bowl", {"bowls"}},
      {"knife", {"knives"}},
      {"fork", {"forks"}},
      {"bed", {"beds"}},
      {"teddy bear", {"teddy bears"}},
      {"skis", {"ski"}},
      {"snowboard", {"snowboards"}},
      {"bus", {"buses"}},
      {"truck", {"trucks"}},
      {"tv", {"tvs", "television"}},
      {"remote", {"remotes"}},
      {"kite", {"kites"}},
      {"umbrella", {"umbrellas"}},
      {"pizza", {"pizzas"}},
      {"bottle", {"bottles"}},
      {"clock", {"clocks"}},
      {"vase", {"vases"}},
      {"horse", {"horses"}},
      {"sheep", {"lamb"}},
      {"train", {"trains"}},
      {"bench", {"benches"}},
      {"book", {"books"}},
      {"surfboard", {"surfboards"}},
  };
  return table;
}

inline metrics::Lexicon make_lexicon(std::size_t size) {
  if (size > builtin_objects().size())
    throw ValidationError("lexicon size " + std::to_string(size) + " exceeds the built-in table (" +
                          std::to_string(builtin_objects().size()) + ")");
  metrics::Lexicon lex;
  for (std::size_t i = 0; i < size; ++i) lex.add(builtin_objects()[i].name, builtin_objects()[i].synonyms);
  return lex;
}

inline std::optional<ObjectId> partner_of(ObjectId o, std::size_t num_objects) {
  const ObjectId p = o ^ 1u;
  if (p >= num_objects) return std::nullopt;
  return p;
}

struct CorpusParams {
  std::size_t num_scenes = 200;
  std::size_t objects_per_scene = 3;
  std::size_t lexicon_size = 16;
  double bias_strength = 0.8;
  std::size_t bias_set_size = 2;

  void validate() const {
    if (num_scenes == 0) throw ValidationError("num_scenes must be positive");
    if (lexicon_size < 8) throw ValidationError("lexicon size must be at least 8");
    if (lexicon_size > builtin_objects().size())
      throw ValidationError("lexicon size exceeds the built-in table (" + std::to_string(builtin_objects().size()) +
                            ")");
    if (objects_per_scene == 0 || objects_per_scene > lexicon_size)
      throw ValidationError("objects_per_scene (" + std::to_string(objects_per_scene) +
                            ") must lie in [1, lexicon size " + std::to_string(lexicon_size) + "]");
    if (!(bias_strength >= 0.0 && bias_strength <= 1.0)) throw ValidationError("bias_strength must lie in [0, 1]");
  }
};

struct Scene {
  std::string image_id;
  std::vector<ObjectId> objects;   // ascending
  std::vector<ObjectId> bias_set;  // ascending, disjoint from objects
};

struct Corpus {
  CorpusParams params;
  std::uint64_t seed = 0;
  metrics::Lexicon lexicon;
  std::vector<Scene> scenes;
  metrics::CooccurrenceStats stats;

  std::vector<metrics::GroundTruth> truths() const {
    std::vector<metrics::GroundTruth> out;
    for (const auto& s : scenes) out.push_back({s.image_id, s.objects, "synthetic"});
    return out;
  }
};

inline std::string scene_id(std::size_t index) {
  std::string s = std::to_string(index);
  return "scene_" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

/// Draws the object sets of `count` scenes.
inline std::vector<std::vector<ObjectId>> draw_scene_objects(const CorpusParams& p, std::size_t count,
                                                             SplitMix64& rng) {
  std::vector<std::vector<ObjectId>> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    std::vector<bool> present(p.lexicon_size, false);
    std::vector<ObjectId> objs;
    while (objs.size() < p.objects_per_scene) {
      std::vector<ObjectId> absent;
      for (ObjectId o = 0; o < p.lexicon_size; ++o)
        if (!present[o]) absent.push_back(o);
      const ObjectId o = absent[rng.below(absent.size())];
      present[o] = true;
      objs.push_back(o);
      const auto partner = partner_of(o, p.lexicon_size);
      // the coin is always drawn so the stream does not depend on room
      const bool pair = rng.uniform() < p.bias_strength;
      if (partner && !present[*partner] && objs.size() < p.objects_per_scene && pair) {
        present[*partner] = true;
        objs.push_back(*partner);
      }
    }
    std::sort(objs.begin(), objs.end());
    out.push_back(std::move(objs));
  }
  return out;
}

/// Absent objects with the highest summed co-occurrence with `present`
/// (positive scores only; ties by frequency, then id).
inline std::vector<ObjectId> bias_set_for(const std::vector<ObjectId>& present, const metrics::CooccurrenceStats& st,
                                          std::size_t size) {
  std::vector<std::pair<ObjectId, std::size_t>> cand;
  for (ObjectId a = 0; a < st.num_objects; ++a) {
    if (std::binary_search(present.begin(), present.end(), a)) continue;
    std::size_t co = 0;
    for (ObjectId p : present) co += st.count(p, a);
    if (co > 0) cand.emplace_back(a, co);
  }
  std::stable_sort(cand.begin(), cand.end(), [&](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    if (st.frequency[x.first] != st.frequency[y.first]) return st.frequency[x.first] > st.frequency[y.first];
    return x.first < y.first;
  });
  std::vector<ObjectId> out;
  for (std::size_t i = 0; i < cand.size() && i < size; ++i) out.push_back(cand[i].first);
  std::sort(out.begin(), out.end());
  return out;
}

inline Corpus generate_corpus(const CorpusParams& params, std::uint64_t seed) {
  params.validate();
  Corpus c;
  c.params = params;
  c.seed = seed;
  c.lexicon = make_lexicon(params.lexicon_size);
  SplitMix64 rng(seed);
  const auto sets = draw_scene_objects(params, params.num_scenes, rng);
  c.stats = metrics::CooccurrenceStats::from_sets(params.lexicon_size, sets);
  for (std::size_t i = 0; i < sets.size(); ++i)
    c.scenes.push_back({scene_id(i), sets[i], bias_set_for(sets[i], c.stats, params.bias_set_size)});
  return c;
}

}  // namespace lisa::harness
