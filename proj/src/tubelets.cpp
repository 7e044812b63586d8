// SPDX-License-Identifier: Apache-2.0
#include "ovqa/tubelets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ovqa::tubelets {

int Tubelet::present_count() const {
  int n = 0;
  for (const FrameSlot& s : frames) n += s.present ? 1 : 0;
  return n;
}

double Tubelet::mean_confidence() const {
  double sum = 0.0;
  int n = 0;
  for (const FrameSlot& s : frames) {
    if (s.present) {
      sum += s.confidence;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / n;
}

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni <= 0.0 ? 0.0 : inter / uni;
}

double cosine(const diff::NDArray& a, const diff::NDArray& b) {
  if (!a.same_shape(b)) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na < 1e-24 || nb < 1e-24) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<Tubelet> track(const std::vector<std::vector<Detection>>& frames,
                           const TrackParams& params) {
  const int frame_count = static_cast<int>(frames.size());
  struct Track {
    Box last_box;
    diff::NDArray last_feature;
    int idle = 0;  // frames since last match
  };
  std::vector<Tubelet> tubelets;
  std::vector<Track> tracks;  // parallel to tubelets

  for (int f = 0; f < frame_count; ++f) {
    const auto& dets = frames[f];
    std::vector<bool> det_used(dets.size(), false);
    std::vector<bool> trk_used(tracks.size(), false);

    // greedy best-first matching under the threshold
    while (true) {
      double best = params.match_threshold;
      int best_t = -1, best_d = -1;
      for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
        if (trk_used[ti] || tracks[ti].idle > params.max_age) continue;
        for (std::size_t di = 0; di < dets.size(); ++di) {
          if (det_used[di]) continue;
          const double cost =
              params.iou_weight * (1.0 - iou(tracks[ti].last_box, dets[di].box)) +
              params.app_weight * (1.0 - cosine(tracks[ti].last_feature, dets[di].feature));
          if (cost < best) {
            best = cost;
            best_t = static_cast<int>(ti);
            best_d = static_cast<int>(di);
          }
        }
      }
      if (best_t < 0) break;
      trk_used[best_t] = true;
      det_used[best_d] = true;
      const Detection& d = dets[best_d];
      FrameSlot& slot = tubelets[best_t].frames[f];
      slot.present = true;
      slot.feature = d.feature;
      slot.box = d.box;
      slot.confidence = d.confidence;
      slot.true_id = d.true_id;
      tracks[best_t].last_box = d.box;
      tracks[best_t].last_feature = d.feature;
      tracks[best_t].idle = 0;
    }

    for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
      if (!trk_used[ti]) ++tracks[ti].idle;
    }

    // unmatched detections open new tubelets
    for (std::size_t di = 0; di < dets.size(); ++di) {
      if (det_used[di]) continue;
      const Detection& d = dets[di];
      Tubelet tub;
      tub.id = static_cast<int>(tubelets.size());
      tub.frames.resize(frame_count);
      FrameSlot& slot = tub.frames[f];
      slot.present = true;
      slot.feature = d.feature;
      slot.box = d.box;
      slot.confidence = d.confidence;
      slot.true_id = d.true_id;
      tubelets.push_back(std::move(tub));
      tracks.push_back({d.box, d.feature, 0});
    }
  }
  return tubelets;
}

diff::NDArray spatial_feature(const Box& box, double width, double height) {
  if (width <= 0.0 || height <= 0.0) {
    throw std::invalid_argument("spatial_feature: frame size must be positive");
  }
  if (box.x_min > box.x_max || box.y_min > box.y_max) {
    throw std::invalid_argument("spatial_feature: inverted box");
  }
  const double dx = box.x_max - box.x_min;
  const double dy = box.y_max - box.y_min;
  return diff::NDArray::vector({box.x_min / width, box.y_min / height, box.x_max / width,
                                box.y_max / height, dx / width, dy / height,
                                dx * dy / (width * height)});
}

ClipSet partition(const Tubelet& tubelet, int parts, int part_len) {
  const int frame_count = static_cast<int>(tubelet.frames.size());
  if (parts < 1 || part_len < 1 || parts * part_len < frame_count) {
    throw std::invalid_argument("partition: K*t = " + std::to_string(parts * part_len) +
                                " cannot cover T = " + std::to_string(frame_count));
  }
  ClipSet cs;
  cs.parts = parts;
  cs.part_len = part_len;
  cs.frame_index.assign(parts, std::vector<int>(part_len, -1));
  cs.mask.assign(parts, std::vector<std::uint8_t>(part_len, 0));
  for (int k = 0; k < parts; ++k) {
    for (int i = 0; i < part_len; ++i) {
      const int f = k * part_len + i;
      if (f >= frame_count) continue;  // padding slot
      cs.frame_index[k][i] = f;
      cs.mask[k][i] = tubelet.frames[f].present ? 1 : 0;
    }
  }
  return cs;
}

std::vector<Tubelet> select_tubelets(std::vector<Tubelet> tubelets, int n, int frame_count) {
  if (n < 1) throw std::invalid_argument("select_tubelets: n must be >= 1");
  std::sort(tubelets.begin(), tubelets.end(), [](const Tubelet& a, const Tubelet& b) {
    const int ca = a.present_count(), cb = b.present_count();
    if (ca != cb) return ca > cb;
    const double ma = a.mean_confidence(), mb = b.mean_confidence();
    if (ma != mb) return ma > mb;
    return a.id < b.id;
  });
  if (static_cast<int>(tubelets.size()) > n) tubelets.resize(n);
  while (static_cast<int>(tubelets.size()) < n) {
    Tubelet pad;
    pad.id = -1;
    pad.frames.resize(frame_count);
    tubelets.push_back(std::move(pad));
  }
  return tubelets;
}

}  // namespace ovqa::tubelets
