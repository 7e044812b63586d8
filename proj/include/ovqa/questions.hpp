// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ovqa/rng.hpp"
#include "ovqa/scene.hpp"

namespace ovqa::scenegen {

enum class QCategory {
  kExist,
  kCount,
  kAttributeQuery,
  kIntegerComparison,
  kAttributeComparison,
};
constexpr int kCategoryCount = 5;
const char* to_string(QCategory c);
std::optional<QCategory> category_from_string(const std::string& s);

/// Attribute filter; unset fields match anything. An empty filter renders
/// as "object"/"objects".
struct Filter {
  std::optional<ObjSize> size;
  std::optional<Color> color;
  std::optional<Shape> shape;

  bool matches(const ObjectSpec& o) const;
};

enum class QueriedAttr { kColor, kShape, kSize };

// --- template programs ------------------------------------------------------
// Each struct is the formal program of one question family; the answer is
// defined by eval_program over the SceneSpec ground truth.

struct ExistProgram { Filter f; };
struct ExistMovingProgram { Filter f; bool at_end = true; };
struct EventOrderProgram {
  Filter a;
  EventAction ea = EventAction::kStartMoving;
  Filter b;
  EventAction eb = EventAction::kStartRotating;
  bool before = true;
};
struct CountProgram { Filter f; };
struct CountEventProgram { Filter f; EventAction e = EventAction::kStartMoving; };
struct QueryAttrProgram { Filter f; QueriedAttr which = QueriedAttr::kColor; };
struct QueryDirProgram { Filter f; };
struct QueryEventOrdinalProgram {
  QueriedAttr which = QueriedAttr::kColor;
  EventAction e = EventAction::kStartMoving;
  bool first = true;
};
struct QueryExtremeProgram {
  QueriedAttr which = QueriedAttr::kColor;
  bool leftmost = true;
  bool at_end = true;
};
struct IntCompareProgram {
  Filter a;
  Filter b;
  enum Mode { kMore, kFewer, kEqual } mode = kMore;
};
struct AttrCompareProgram { Filter a; Filter b; QueriedAttr which = QueriedAttr::kColor; };
struct SameDirectionProgram { Filter a; Filter b; };
struct RelPositionProgram { Filter a; Filter b; bool left = true; bool at_end = true; };

using Program = std::variant<ExistProgram, ExistMovingProgram, EventOrderProgram, CountProgram,
                             CountEventProgram, QueryAttrProgram, QueryDirProgram,
                             QueryEventOrdinalProgram, QueryExtremeProgram, IntCompareProgram,
                             AttrCompareProgram, SameDirectionProgram, RelPositionProgram>;

QCategory category_of(const Program& p);

/// Closed answer label set: yes, no, 0..max_count, colors, shapes, sizes,
/// directions, in that order.
struct AnswerSpace {
  explicit AnswerSpace(int max_count);
  int max_count = 0;
  std::vector<std::string> labels;
  int index_of(const std::string& label) const;  // throws on unknown label
};

/// Renders the program into its question token sequence (ends with "?").
std::vector<std::string> render_tokens(const Program& p);

/// Parses a token sequence back into a program. Throws std::runtime_error
/// on any sequence outside the closed grammar.
Program parse_tokens(const std::vector<std::string>& tokens);

/// Evaluates the program on ground truth. Returns nullopt when the program
/// is unsatisfiable for this scene (non-unique referent, missing event, or
/// undefined direction); such instances are skipped by the generator.
std::optional<std::string> eval_program(const Program& p, const SceneSpec& scene);

struct QAItem {
  std::vector<std::string> question;
  QCategory category = QCategory::kExist;
  int answer = 0;  // index into AnswerSpace::labels
};

struct QaGenConfig {
  std::array<int, kCategoryCount> per_category = {1, 1, 1, 1, 1};
  /// Probability of preferring temporal/relational sub-templates where a
  /// category offers both.
  double temporal_bias = 0.5;
  int max_count = 8;
};

/// Samples satisfiable questions per category; answers come from
/// eval_program. Exist-style yes/no questions alternate their target answer
/// so the label marginal stays balanced. Unsatisfiable draws are skipped,
/// never fabricated, so a category can come up short on degenerate scenes.
std::vector<QAItem> generate_qa(const SceneSpec& scene, std::uint64_t seed,
                                const QaGenConfig& config);

/// Every question token the grammar can emit, in canonical order.
std::vector<std::string> question_vocabulary(int max_count);

}  // namespace ovqa::scenegen
