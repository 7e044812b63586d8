// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ovqa/ndarray.hpp"
#include "ovqa/scene.hpp"

namespace ovqa::tubelets {

using scenegen::Box;
using scenegen::Detection;

/// One frame of an object's life. When !present the remaining fields are
/// meaningless and must not be read.
struct FrameSlot {
  bool present = false;
  diff::NDArray feature;  // v_a
  Box box;                // v_b, pixel coordinates
  double confidence = 0.0;
  int true_id = -1;  // hidden ground-truth identity, evaluation only
};

/// An object's life: exactly T slots, missing frames marked absent.
struct Tubelet {
  int id = -1;
  std::vector<FrameSlot> frames;

  int present_count() const;
  double mean_confidence() const;  // over present slots, 0 when none
  bool all_absent() const { return present_count() == 0; }
};

struct TrackParams {
  double iou_weight = 0.6;
  double app_weight = 0.4;
  double match_threshold = 0.7;
  int max_age = 5;
};

double iou(const Box& a, const Box& b);
double cosine(const diff::NDArray& a, const diff::NDArray& b);

/// Greedy per-frame association on cost
///   iou_weight*(1-IoU) + app_weight*(1-cosine(v_a)),
/// best pair first, only pairs under match_threshold. Unmatched detections
/// open new tubelets; a track unmatched for more than max_age frames stops
/// accepting. All tubelets are padded with absent slots to full length T.
std::vector<Tubelet> track(const std::vector<std::vector<Detection>>& frames,
                           const TrackParams& params);

/// The 7-dim normalized box descriptor:
/// [x_min/W, y_min/H, x_max/W, y_max/H, dx/W, dy/H, dx*dy/(W*H)].
/// Throws std::invalid_argument for inverted boxes or W,H <= 0.
diff::NDArray spatial_feature(const Box& box, double width, double height);

/// Frame slots of one tubelet grouped into K parts of t slots each, with the
/// per-slot validity mask. frame_index is -1 on padding slots; mask is 0
/// exactly on absent and padding slots.
struct ClipSet {
  int parts = 0;     // K
  int part_len = 0;  // t
  std::vector<std::vector<int>> frame_index;
  std::vector<std::vector<std::uint8_t>> mask;
};

/// Requires parts*part_len >= T; throws std::invalid_argument otherwise.
ClipSet partition(const Tubelet& tubelet, int parts, int part_len);

/// Ranks by (present frames, mean confidence) descending, ties broken by
/// lower id, truncates to n, and pads with all-absent tubelets of length
/// frame_count up to exactly n entries.
std::vector<Tubelet> select_tubelets(std::vector<Tubelet> tubelets, int n, int frame_count);

}  // namespace ovqa::tubelets
