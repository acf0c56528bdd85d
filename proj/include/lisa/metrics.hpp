// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Object-hallucination metrics: CHAIR, POPE and AMBER-lite.
///
/// Objects are identified by dense canonical ids into a Lexicon. Every ratio
/// is reported together with its numerator and denominator; a zero
/// denominator yields 0 with `degenerate` set.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lisa/errors.hpp"
#include "lisa/tensor.hpp"

namespace lisa::metrics {

using ObjectId = std::uint32_t;

// ---------------------------------------------------------------------------
// Lexicon and mention extraction
// ---------------------------------------------------------------------------

/// Lower-cased alphanumeric words of `text`.
inline std::vector<std::string> words_of(std::string_view text) {
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

inline std::string join_words(std::span<const std::string> words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s.push_back(' ');
    s += words[i];
  }
  return s;
}

/// Canonical object names plus surface forms (synonyms, plurals, multiword).
class Lexicon {
 public:
  /// Adds a canonical object; its own name is always a surface form.
  ObjectId add(const std::string& canonical, const std::vector<std::string>& synonyms = {}) {
    const std::string key = join_words(words_of(canonical));
    if (key.empty()) throw ValidationError("lexicon: empty object name");
    if (index_.count(key)) throw ValidationError("lexicon: duplicate object '" + canonical + "'");
    const auto id = static_cast<ObjectId>(names_.size());
    names_.push_back(key);
    index_[key] = id;
    add_surface(key, id);
    for (const auto& s : synonyms) add_surface(s, id);
    return id;
  }

  void add_surface(const std::string& surface, ObjectId id) {
    const auto w = words_of(surface);
    if (w.empty()) throw ValidationError("lexicon: empty surface form");
    const std::string key = join_words(w);
    auto [it, inserted] = surfaces_.emplace(key, id);
    if (!inserted && it->second != id)
      throw ValidationError("lexicon: surface form '" + key + "' maps to two objects");
    max_words_ = std::max(max_words_, w.size());
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(ObjectId id) const { return names_.at(id); }
  const std::vector<std::string>& names() const { return names_; }
  const std::map<std::string, ObjectId>& surfaces() const { return surfaces_; }
  std::size_t max_words() const { return max_words_; }

  /// Canonical id of a canonical name (not a synonym).
  ObjectId id_of(const std::string& canonical) const {
    auto it = index_.find(join_words(words_of(canonical)));
    if (it == index_.end()) throw ValidationError("unknown object '" + canonical + "'");
    return it->second;
  }

  const ObjectId* lookup_surface(const std::string& joined) const {
    auto it = surfaces_.find(joined);
    return it == surfaces_.end() ? nullptr : &it->second;
  }

 private:
  std::vector<std::string> names_;
  std::map<std::string, ObjectId> index_;
  std::map<std::string, ObjectId> surfaces_;
  std::size_t max_words_ = 0;
};

struct Mention {
  std::string surface;
  ObjectId object = 0;
};

struct MentionExtraction {
  std::string caption;
  /// Every matched occurrence, in caption order.
  std::vector<Mention> mentions;
  /// Distinct canonical ids, ascending.
  std::vector<ObjectId> objects;
};

/// Greedy longest-match scan over the lower-cased words of `caption`.
inline MentionExtraction extract_mentions(std::string_view caption, const Lexicon& lex) {
  MentionExtraction out;
  out.caption = std::string(caption);
  const auto w = words_of(caption);
  std::set<ObjectId> seen;
  std::size_t i = 0;
  while (i < w.size()) {
    std::size_t matched = 0;
    const std::size_t longest = std::min(lex.max_words(), w.size() - i);
    for (std::size_t n = longest; n >= 1 && matched == 0; --n) {
      const std::string key = join_words(std::span<const std::string>(w).subspan(i, n));
      if (const ObjectId* id = lex.lookup_surface(key)) {
        out.mentions.push_back({key, *id});
        seen.insert(*id);
        matched = n;
      }
    }
    i += matched ? matched : 1;
  }
  out.objects.assign(seen.begin(), seen.end());
  return out;
}

// ---------------------------------------------------------------------------
// Ratios
// ---------------------------------------------------------------------------

struct Ratio {
  double numerator = 0.0;
  double denominator = 0.0;
  double value = 0.0;
  bool degenerate = false;

  static Ratio of(double num, double den) {
    Ratio r{num, den, 0.0, den == 0.0};
    if (!r.degenerate) r.value = num / den;
    return r;
  }
};

struct GroundTruth {
  std::string image_id;
  std::vector<ObjectId> objects;
  std::string source = "synthetic";
};

struct CaptionItem {
  MentionExtraction mentions;
  GroundTruth truth;
  /// Tempting absent objects for this image (AMBER-lite Cog).
  std::vector<ObjectId> bias_set;
};

namespace detail {

inline bool contains(std::span<const ObjectId> sorted_or_not, ObjectId id) {
  return std::find(sorted_or_not.begin(), sorted_or_not.end(), id) != sorted_or_not.end();
}

inline std::size_t hallucinated_count(const CaptionItem& item) {
  std::size_t n = 0;
  for (ObjectId o : item.mentions.objects) n += contains(item.truth.objects, o) ? 0 : 1;
  return n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CHAIR
// ---------------------------------------------------------------------------

enum class ChairPooling {
  corpus,       // sum of counts over captions
  per_caption,  // mean of per-caption ratios over captions with mentions
};

struct ChairScores {
  Ratio chair_s;
  Ratio chair_i;
};

/// CHAIR_S: captions with at least one hallucinated object / captions.
/// CHAIR_I: hallucinated mentioned objects / mentioned objects. Each caption
/// contributes its distinct mentioned objects.
inline ChairScores chair_scores(std::span<const CaptionItem> items, ChairPooling pooling = ChairPooling::corpus) {
  if (items.empty()) throw ValidationError("chair_scores: empty corpus");
  std::size_t bad_captions = 0, hallucinated = 0, mentioned = 0;
  double ratio_sum = 0.0;
  std::size_t ratio_count = 0;
  for (const auto& item : items) {
    const std::size_t h = detail::hallucinated_count(item);
    const std::size_t m = item.mentions.objects.size();
    bad_captions += h > 0 ? 1 : 0;
    hallucinated += h;
    mentioned += m;
    if (m > 0) {
      ratio_sum += static_cast<double>(h) / static_cast<double>(m);
      ++ratio_count;
    }
  }
  ChairScores s;
  s.chair_s = Ratio::of(double(bad_captions), double(items.size()));
  if (pooling == ChairPooling::corpus) {
    s.chair_i = Ratio::of(double(hallucinated), double(mentioned));
  } else {
    s.chair_i = Ratio::of(ratio_sum, double(ratio_count));
  }
  return s;
}

// ---------------------------------------------------------------------------
// POPE
// ---------------------------------------------------------------------------

enum class PopeSplit { random = 0, popular = 1, adversarial = 2 };
inline constexpr std::array<PopeSplit, 3> kPopeSplits{PopeSplit::random, PopeSplit::popular, PopeSplit::adversarial};

inline const char* to_string(PopeSplit s) {
  switch (s) {
    case PopeSplit::random: return "random";
    case PopeSplit::popular: return "popular";
    case PopeSplit::adversarial: return "adversarial";
  }
  return "?";
}

inline PopeSplit parse_split(const std::string& s) {
  if (s == "random") return PopeSplit::random;
  if (s == "popular") return PopeSplit::popular;
  if (s == "adversarial") return PopeSplit::adversarial;
  throw ValidationError("unknown POPE split '" + s + "'");
}

struct PopeItem {
  std::string image_id;
  ObjectId object = 0;
  PopeSplit split = PopeSplit::random;
  bool gold_yes = false;
  bool answer_yes = false;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

struct PrfScores {
  Confusion counts;
  Ratio precision;
  Ratio recall;
  double f1 = 0.0;
  /// Set when P + R = 0 or either ratio is undefined.
  bool f1_degenerate = false;
};

inline PrfScores prf_from(const Confusion& c) {
  PrfScores s;
  s.counts = c;
  s.precision = Ratio::of(double(c.tp), double(c.tp + c.fp));
  s.recall = Ratio::of(double(c.tp), double(c.tp + c.fn));
  const double p = s.precision.value, r = s.recall.value;
  s.f1_degenerate = s.precision.degenerate || s.recall.degenerate || p + r == 0.0;
  s.f1 = p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  return s;
}

struct PopeReport {
  std::array<PrfScores, 3> per_split;
  PrfScores overall;

  const PrfScores& split(PopeSplit s) const { return per_split[static_cast<std::size_t>(s)]; }
};

/// "yes" is the positive class.
inline PopeReport pope_f1(std::span<const PopeItem> items) {
  std::array<Confusion, 3> per{};
  Confusion all;
  for (const auto& it : items) {
    for (Confusion* c : {&per[static_cast<std::size_t>(it.split)], &all}) {
      if (it.gold_yes && it.answer_yes) ++c->tp;
      else if (!it.gold_yes && it.answer_yes) ++c->fp;
      else if (it.gold_yes) ++c->fn;
      else ++c->tn;
    }
  }
  PopeReport r;
  for (std::size_t i = 0; i < 3; ++i) r.per_split[i] = prf_from(per[i]);
  r.overall = prf_from(all);
  return r;
}

// ---------------------------------------------------------------------------
// AMBER-lite
// ---------------------------------------------------------------------------

struct AmberScores {
  ChairScores chair;
  Ratio cover;  // numerator: sum of per-image coverages, denominator: images
  Ratio hal;
  Ratio cog;
};

/// Cover: mean over images of |mentioned and true| / |true|. Hal: share of
/// responses with a hallucinated object. Cog: hallucinated objects in the
/// image's bias set / all mentioned objects, pooled.
inline AmberScores amber_lite(std::span<const CaptionItem> items) {
  if (items.empty()) throw ValidationError("amber_lite: empty corpus");
  double cover_sum = 0.0;
  std::size_t cog_hits = 0, mentioned = 0;
  for (const auto& item : items) {
    if (item.truth.objects.empty())
      throw ValidationError("amber_lite: image '" + item.truth.image_id + "' has an empty truth set");
    std::set<ObjectId> truth(item.truth.objects.begin(), item.truth.objects.end());
    std::size_t covered = 0;
    for (ObjectId o : item.mentions.objects) {
      if (truth.count(o)) ++covered;
      else if (detail::contains(item.bias_set, o)) ++cog_hits;
    }
    cover_sum += static_cast<double>(covered) / static_cast<double>(truth.size());
    mentioned += item.mentions.objects.size();
  }
  AmberScores s;
  s.chair = chair_scores(items);
  s.cover = Ratio::of(cover_sum, double(items.size()));
  s.hal = s.chair.chair_s;
  s.cog = Ratio::of(double(cog_hits), double(mentioned));
  return s;
}

// ---------------------------------------------------------------------------
// Co-occurrence statistics and POPE suites
// ---------------------------------------------------------------------------

/// Scene-level object statistics over a corpus.
struct CooccurrenceStats {
  std::size_t num_objects = 0;
  std::size_t num_scenes = 0;
  std::vector<std::size_t> frequency;  // scenes containing each object
  std::vector<std::size_t> pair_count; // num_objects x num_objects, symmetric, zero diagonal

  static CooccurrenceStats from_sets(std::size_t num_objects, std::span<const std::vector<ObjectId>> scenes) {
    CooccurrenceStats s;
    s.num_objects = num_objects;
    s.num_scenes = scenes.size();
    s.frequency.assign(num_objects, 0);
    s.pair_count.assign(num_objects * num_objects, 0);
    for (const auto& sc : scenes) {
      const std::set<ObjectId> uniq(sc.begin(), sc.end());
      for (ObjectId a : uniq) {
        if (a >= num_objects) throw ValidationError("co-occurrence: object id out of range");
        ++s.frequency[a];
        for (ObjectId b : uniq)
          if (a != b) ++s.pair_count[a * num_objects + b];
      }
    }
    return s;
  }

  std::size_t count(ObjectId a, ObjectId b) const { return pair_count[a * num_objects + b]; }

  /// Fraction of scenes containing `a` that also contain `b`.
  double conditional(ObjectId a, ObjectId b) const {
    return frequency[a] == 0 ? 0.0 : double(count(a, b)) / double(frequency[a]);
  }
};

struct PopeSuite {
  std::vector<PopeItem> items;
  /// Image/split pairs that received fewer than 3 yes or 3 no questions.
  std::vector<std::string> flagged;
};

namespace detail {

/// Absent objects ordered by descending score, ties by ascending id.
inline std::vector<ObjectId> rank_absent(std::span<const ObjectId> absent, const std::vector<double>& score) {
  std::vector<ObjectId> out(absent.begin(), absent.end());
  std::stable_sort(out.begin(), out.end(), [&](ObjectId a, ObjectId b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  });
  return out;
}

/// First `k` entries of a seeded Fisher-Yates shuffle.
inline std::vector<ObjectId> sample_without_replacement(std::vector<ObjectId> pool, std::size_t k, SplitMix64& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace detail

inline constexpr std::size_t kPopePerPolarity = 3;

/// Builds 3 yes + 3 no questions per image for each split.
///
/// Present objects are sampled uniformly (all of them when there are at most
/// three). Absent objects: uniform sample (random), most frequent in the
/// corpus (popular), or highest summed co-occurrence with the present objects,
/// frequency then id breaking ties (adversarial). Stream
/// `3 * image_index + split` of `seed` drives the sampling.
inline PopeSuite build_pope_suite(std::span<const GroundTruth> truths, std::size_t num_objects,
                                  const CooccurrenceStats& stats, std::uint64_t seed) {
  if (stats.num_objects != num_objects) throw ValidationError("build_pope_suite: statistics do not match lexicon");
  PopeSuite suite;
  for (std::size_t img = 0; img < truths.size(); ++img) {
    const auto& gt = truths[img];
    std::vector<ObjectId> present(gt.objects.begin(), gt.objects.end());
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    std::vector<ObjectId> absent;
    for (ObjectId o = 0; o < num_objects; ++o)
      if (!std::binary_search(present.begin(), present.end(), o)) absent.push_back(o);

    for (PopeSplit split : kPopeSplits) {
      SplitMix64 rng(sub_seed(seed, 3 * img + static_cast<std::size_t>(split)));
      const auto yes = detail::sample_without_replacement(present, kPopePerPolarity, rng);
      std::vector<ObjectId> no;
      if (split == PopeSplit::random) {
        no = detail::sample_without_replacement(absent, kPopePerPolarity, rng);
      } else {
        std::vector<double> score(num_objects, 0.0);
        for (ObjectId a : absent) {
          if (split == PopeSplit::popular) {
            score[a] = double(stats.frequency[a]);
          } else {
            double co = 0.0;
            for (ObjectId p : present) co += double(stats.count(p, a));
            // frequency as a fractional tie-break below one co-occurrence count
            score[a] = co + double(stats.frequency[a]) / double(stats.num_scenes + 1);
          }
        }
        no = detail::rank_absent(absent, score);
        no.resize(std::min(no.size(), kPopePerPolarity));
      }
      if (yes.size() < kPopePerPolarity || no.size() < kPopePerPolarity)
        suite.flagged.push_back(gt.image_id + ":" + to_string(split));
      for (ObjectId o : yes) suite.items.push_back({gt.image_id, o, split, true, false});
      for (ObjectId o : no) suite.items.push_back({gt.image_id, o, split, false, false});
    }
  }
  return suite;
}

}  // namespace lisa::metrics
