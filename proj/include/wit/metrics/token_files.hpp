// SPDX-License-Identifier: Apache-2.0
//
// Token-sequence files for offline scoring. Both candidates and references
// use the dataset sidecar layout: {"samples": [{"id": ..., "captions": [[ids]]}]}.
// A candidate file carries one caption per sample; extra keys are ignored so a
// dataset sidecar works directly as the reference file.
#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wit/metrics/scores.hpp"

namespace wit {

using TokenFile = std::vector<std::pair<std::string, std::vector<TokenSeq>>>;

inline TokenFile parse_token_file(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("samples") || !j["samples"].is_array())
    throw std::invalid_argument(where + ": expected an object with a \"samples\" array");
  TokenFile out;
  std::size_t i = 0;
  for (const auto& s : j["samples"]) {
    const std::string at = where + ": samples[" + std::to_string(i++) + "]";
    if (!s.contains("id") || !s["id"].is_string()) throw std::invalid_argument(at + ".id: missing or not a string");
    if (!s.contains("captions")) throw std::invalid_argument(at + ".captions: missing");
    try {
      out.emplace_back(s["id"].get<std::string>(), s["captions"].get<std::vector<TokenSeq>>());
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(at + ".captions: " + e.what());
    }
  }
  return out;
}

inline TokenFile read_token_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return parse_token_file(j, path);
}

inline nlohmann::json token_file_json(const TokenFile& f) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& [id, caps] : f) samples.push_back({{"id", id}, {"captions", caps}});
  return {{"samples", samples}};
}

struct ScoreLine {
  double bleu4 = 0, rouge_l = 0, cider = 0;
  std::size_t count = 0;
};

/// Scores each candidate's first caption against the reference captions with
/// the same id. CIDEr document frequencies come from the matched references.
inline ScoreLine score_token_files(const TokenFile& candidates, const TokenFile& references) {
  std::map<std::string, const std::vector<TokenSeq>*> by_id;
  for (const auto& [id, caps] : references) by_id[id] = &caps;
  std::vector<TokenSeq> cands;
  std::vector<RefSet> refs;
  for (const auto& [id, caps] : candidates) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::invalid_argument("no references for candidate '" + id + "'");
    if (caps.empty()) throw std::invalid_argument("candidate '" + id + "' has no caption");
    RefSet r;
    for (const auto& c : *it->second) r.push_back(strip_special(c));
    if (r.empty()) throw std::invalid_argument("video '" + id + "' has no reference captions");
    cands.push_back(strip_special(caps.front()));
    refs.push_back(std::move(r));
  }
  ScoreLine s;
  s.count = cands.size();
  s.bleu4 = bleu4(cands, refs);
  s.rouge_l = rouge_l(cands, refs);
  s.cider = cider(cands, refs, CorpusStats::build(refs));
  return s;
}

}  // namespace wit
