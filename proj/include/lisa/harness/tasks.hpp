// Copyright (C) 2026 The LISA Authors
// SPDX-License-Identifier: Apache-2.0

/// \file
/// Captioning and yes/no probing of one scene.

#pragma once

#include <span>
#include <vector>

#include "lisa/decode.hpp"
#include "lisa/harness/vocab.hpp"

namespace lisa::harness {

/// Decode settings for captions: stop at <eos>.
inline decode::DecodeConfig caption_config(decode::DecodeConfig cfg) {
  cfg.eos_token = Vocabulary::kEos;
  return cfg;
}

inline decode::DecodeResult run_caption(const Model& m, const Vocabulary& vocab, const decode::DecodeConfig& cfg,
                                        std::span<const ObjectId> objects) {
  const auto prompt = vocab.caption_prompt(objects);
  return decode::decode(m, prompt, caption_config(cfg));
}

/// Answers "is there a <q> ?" for every q in `queries`.
///
/// Equivalent to calling decode_binary on each full question. With the thirds
/// zone policy the shared question prefix is run once and its cache reused.
inline std::vector<decode::BinaryResult> answer_questions(const Model& m, const Vocabulary& vocab,
                                                          const decode::DecodeConfig& cfg,
                                                          std::span<const ObjectId> objects,
                                                          std::span<const ObjectId> queries) {
  std::vector<decode::BinaryResult> out;
  out.reserve(queries.size());
  if (cfg.zone_policy != spectral::ZonePolicy::thirds) {
    for (ObjectId q : queries)
      out.push_back(decode::decode_binary(m, vocab.question(objects, q), cfg, Vocabulary::kYes, Vocabulary::kNo));
    return out;
  }
  cfg.validate();
  const auto prefix = vocab.question_prefix(objects);
  if (prefix.size() + 2 > m.config.max_seq_len) throw OverflowError("question does not fit in max_seq_len");
  const auto zones = spectral::partition_zones(nullptr, m.config.num_layers, spectral::ZonePolicy::thirds);
  const auto ctx = decode::make_context(m, cfg, zones);
  StepOptions silent = ctx.step_options();
  silent.skip_lens = true;
  KVCache base(m.config);
  for (TokenId t : prefix) forward_step(m, base, t, ctx.modulator_ptr(), silent);
  for (ObjectId q : queries) {
    KVCache cache = base;
    const auto suffix = vocab.question_suffix(q);
    forward_step(m, cache, suffix[0], ctx.modulator_ptr(), silent);
    const auto acts = forward_step(m, cache, suffix[1], ctx.modulator_ptr(), ctx.step_options());
    auto r = decode::binary_from(ctx, acts, Vocabulary::kYes, Vocabulary::kNo);
    r.stats = cache.stats;
    out.push_back(r);
  }
  return out;
}

}  // namespace lisa::harness
