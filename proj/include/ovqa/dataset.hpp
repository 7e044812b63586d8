// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ovqa/questions.hpp"
#include "ovqa/scene.hpp"

namespace ovqa::scenegen {

/// On-disk layout under a dataset directory:
///   meta.json    generation parameters and feature dimensions
///   vocab.txt    question tokens and answer labels, one per line, in
///                [tokens] / [answers] sections
///   scenes.jsonl one scene per line: ground-truth spec, detections, context
///   qa.jsonl     one QA item per line: scene id, category, tokens, answer
///   splits.json  scene ids per split (train/test/val)
struct DatasetMeta {
  int version = 1;
  std::uint64_t seed = 0;
  int frames = 16;
  int width = 160;
  int height = 120;
  int d_a = 24;
  int d_c = 16;
  int max_count = 8;
  double p_miss = 0.0;
  double jitter_sigma = 0.0;
  double feature_sigma = 0.0;
};

struct SceneRecord {
  int id = 0;
  SceneSpec spec;
  RenderedScene rendered;
};

struct QaRecord {
  int scene_id = 0;
  QAItem item;
};

struct Splits {
  std::vector<int> train;
  std::vector<int> test;
  std::vector<int> val;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<SceneRecord> scenes;
  std::vector<QaRecord> qa;
  Splits splits;
  std::vector<std::string> tokens;
  std::vector<std::string> answers;

  const SceneRecord& scene_by_id(int id) const;
  const std::vector<int>& split_ids(const std::string& name) const;
};

void write_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

/// Writes the [tokens]/[answers] vocabulary file on its own.
void write_vocabulary(const std::string& path, const std::vector<std::string>& tokens,
                      const std::vector<std::string>& answers);

}  // namespace ovqa::scenegen
