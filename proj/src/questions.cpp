// SPDX-License-Identifier: Apache-2.0
#include "ovqa/questions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ovqa::scenegen {

const char* to_string(QCategory c) {
  switch (c) {
    case QCategory::kExist: return "exist";
    case QCategory::kCount: return "count";
    case QCategory::kAttributeQuery: return "attribute-query";
    case QCategory::kIntegerComparison: return "integer-comparison";
    case QCategory::kAttributeComparison: return "attribute-comparison";
  }
  return "?";
}

std::optional<QCategory> category_from_string(const std::string& s) {
  for (int i = 0; i < kCategoryCount; ++i) {
    if (s == to_string(static_cast<QCategory>(i))) return static_cast<QCategory>(i);
  }
  return std::nullopt;
}

bool Filter::matches(const ObjectSpec& o) const {
  if (size && *size != o.size) return false;
  if (color && *color != o.color) return false;
  if (shape && *shape != o.shape) return false;
  return true;
}

QCategory category_of(const Program& p) {
  struct Visitor {
    QCategory operator()(const ExistProgram&) { return QCategory::kExist; }
    QCategory operator()(const ExistMovingProgram&) { return QCategory::kExist; }
    QCategory operator()(const EventOrderProgram&) { return QCategory::kExist; }
    QCategory operator()(const CountProgram&) { return QCategory::kCount; }
    QCategory operator()(const CountEventProgram&) { return QCategory::kCount; }
    QCategory operator()(const QueryAttrProgram&) { return QCategory::kAttributeQuery; }
    QCategory operator()(const QueryDirProgram&) { return QCategory::kAttributeQuery; }
    QCategory operator()(const QueryEventOrdinalProgram&) { return QCategory::kAttributeQuery; }
    QCategory operator()(const QueryExtremeProgram&) { return QCategory::kAttributeQuery; }
    QCategory operator()(const IntCompareProgram&) { return QCategory::kIntegerComparison; }
    QCategory operator()(const AttrCompareProgram&) { return QCategory::kAttributeComparison; }
    QCategory operator()(const SameDirectionProgram&) { return QCategory::kAttributeComparison; }
    QCategory operator()(const RelPositionProgram&) { return QCategory::kAttributeComparison; }
  };
  return std::visit(Visitor{}, p);
}

AnswerSpace::AnswerSpace(int max_count_in) : max_count(max_count_in) {
  labels = {"yes", "no"};
  for (int i = 0; i <= max_count; ++i) labels.push_back(std::to_string(i));
  for (int c = 0; c < kColorCount; ++c) labels.push_back(to_word(static_cast<Color>(c)));
  for (int s = 0; s < kShapeCount; ++s) labels.push_back(to_word(static_cast<Shape>(s)));
  labels.push_back(to_word(ObjSize::kSmall));
  labels.push_back(to_word(ObjSize::kBig));
  for (int d = 0; d < 4; ++d) labels.push_back(to_word(static_cast<Direction>(d)));
}

int AnswerSpace::index_of(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) {
    throw std::invalid_argument("AnswerSpace: unknown label '" + label + "'");
  }
  return static_cast<int>(it - labels.begin());
}

// ---------------------------------------------------------------------------
// rendering

namespace {

const char* attr_word(QueriedAttr a) {
  switch (a) {
    case QueriedAttr::kColor: return "color";
    case QueriedAttr::kShape: return "shape";
    case QueriedAttr::kSize: return "size";
  }
  return "?";
}

void push_filter_words(std::vector<std::string>& out, const Filter& f, bool plural) {
  if (f.size) out.push_back(to_word(*f.size));
  if (f.color) out.push_back(to_word(*f.color));
  if (f.shape) {
    out.push_back(plural ? plural_word(*f.shape) : to_word(*f.shape));
  } else {
    out.push_back(plural ? "objects" : "object");
  }
}

void push_event_words(std::vector<std::string>& out, EventAction a) {
  switch (a) {
    case EventAction::kStartMoving: out.push_back("start"); out.push_back("moving"); break;
    case EventAction::kStopMoving: out.push_back("stop"); out.push_back("moving"); break;
    case EventAction::kStartRotating: out.push_back("start"); out.push_back("rotating"); break;
    case EventAction::kStopRotating: out.push_back("stop"); out.push_back("rotating"); break;
  }
}

void push_words(std::vector<std::string>& out, std::initializer_list<const char*> words) {
  for (const char* w : words) out.emplace_back(w);
}

}  // namespace

std::vector<std::string> render_tokens(const Program& p) {
  std::vector<std::string> out;
  struct Visitor {
    std::vector<std::string>& out;
    void operator()(const ExistProgram& q) {
      push_words(out, {"is", "there", "a"});
      push_filter_words(out, q.f, false);
    }
    void operator()(const ExistMovingProgram& q) {
      push_words(out, {"is", "there", "a"});
      push_filter_words(out, q.f, false);
      push_words(out, {"moving", "at", "the", q.at_end ? "end" : "start"});
    }
    void operator()(const EventOrderProgram& q) {
      push_words(out, {"did", "the"});
      push_filter_words(out, q.a, false);
      push_event_words(out, q.ea);
      push_words(out, {q.before ? "before" : "after", "the"});
      push_filter_words(out, q.b, false);
      push_event_words(out, q.eb);
    }
    void operator()(const CountProgram& q) {
      push_words(out, {"how", "many"});
      push_filter_words(out, q.f, true);
      push_words(out, {"are", "there"});
    }
    void operator()(const CountEventProgram& q) {
      push_words(out, {"how", "many"});
      push_filter_words(out, q.f, true);
      push_event_words(out, q.e);
    }
    void operator()(const QueryAttrProgram& q) {
      push_words(out, {"what", attr_word(q.which), "is", "the"});
      push_filter_words(out, q.f, false);
    }
    void operator()(const QueryDirProgram& q) {
      push_words(out, {"what", "direction", "does", "the"});
      push_filter_words(out, q.f, false);
      push_words(out, {"move"});
    }
    void operator()(const QueryEventOrdinalProgram& q) {
      push_words(out, {"what", attr_word(q.which), "is", "the", "object", "that"});
      push_event_words(out, q.e);
      push_words(out, {q.first ? "first" : "last"});
    }
    void operator()(const QueryExtremeProgram& q) {
      push_words(out, {"what", attr_word(q.which), "is", "the",
                       q.leftmost ? "leftmost" : "rightmost", "object", "at", "the",
                       q.at_end ? "end" : "start"});
    }
    void operator()(const IntCompareProgram& q) {
      if (q.mode == IntCompareProgram::kEqual) {
        push_words(out, {"is", "the", "number", "of"});
        push_filter_words(out, q.a, true);
        push_words(out, {"equal", "to", "the", "number", "of"});
        push_filter_words(out, q.b, true);
      } else {
        push_words(out, {"are", "there", q.mode == IntCompareProgram::kMore ? "more" : "fewer"});
        push_filter_words(out, q.a, true);
        push_words(out, {"than"});
        push_filter_words(out, q.b, true);
      }
    }
    void operator()(const AttrCompareProgram& q) {
      push_words(out, {"does", "the"});
      push_filter_words(out, q.a, false);
      push_words(out, {"have", "the", "same", attr_word(q.which), "as", "the"});
      push_filter_words(out, q.b, false);
    }
    void operator()(const SameDirectionProgram& q) {
      push_words(out, {"does", "the"});
      push_filter_words(out, q.a, false);
      push_words(out, {"move", "in", "the", "same", "direction", "as", "the"});
      push_filter_words(out, q.b, false);
    }
    void operator()(const RelPositionProgram& q) {
      push_words(out, {"is", "the"});
      push_filter_words(out, q.a, false);
      push_words(out, {q.left ? "left" : "right", "of", "the"});
      push_filter_words(out, q.b, false);
      push_words(out, {"at", "the", q.at_end ? "end" : "start"});
    }
  };
  std::visit(Visitor{out}, p);
  out.push_back("?");
  return out;
}

// ---------------------------------------------------------------------------
// parsing

namespace {

class TokenCursor {
 public:
  explicit TokenCursor(const std::vector<std::string>& tokens) : tokens_(tokens) {}

  const std::string& peek(std::size_t ahead = 0) const {
    if (pos_ + ahead >= tokens_.size()) {
      throw std::runtime_error("question parse: unexpected end of question");
    }
    return tokens_[pos_ + ahead];
  }
  std::string next() {
    const std::string& t = peek();
    ++pos_;
    return t;
  }
  void expect(const char* word) {
    if (next() != word) {
      throw std::runtime_error(std::string("question parse: expected '") + word + "' near token " +
                               std::to_string(pos_));
    }
  }
  bool at_end() const { return pos_ >= tokens_.size(); }

 private:
  const std::vector<std::string>& tokens_;
  std::size_t pos_ = 0;
};

std::optional<ObjSize> parse_size_word(const std::string& w) {
  if (w == "small") return ObjSize::kSmall;
  if (w == "big") return ObjSize::kBig;
  return std::nullopt;
}

std::optional<Color> parse_color_word(const std::string& w) {
  for (int c = 0; c < kColorCount; ++c) {
    if (w == to_word(static_cast<Color>(c))) return static_cast<Color>(c);
  }
  return std::nullopt;
}

std::optional<Shape> parse_shape_word(const std::string& w, bool plural) {
  for (int s = 0; s < kShapeCount; ++s) {
    const auto shape = static_cast<Shape>(s);
    if (w == (plural ? plural_word(shape) : to_word(shape))) return shape;
  }
  return std::nullopt;
}

// [size] [color] (shape | object/objects)
Filter parse_filter(TokenCursor& cur, bool plural) {
  Filter f;
  if (auto s = parse_size_word(cur.peek())) {
    f.size = s;
    cur.next();
  }
  if (auto c = parse_color_word(cur.peek())) {
    f.color = c;
    cur.next();
  }
  const std::string head = cur.next();
  if (auto sh = parse_shape_word(head, plural)) {
    f.shape = sh;
  } else if (head != (plural ? "objects" : "object")) {
    throw std::runtime_error("question parse: expected a noun, got '" + head + "'");
  }
  return f;
}

EventAction parse_event(TokenCursor& cur) {
  const std::string verb = cur.next();
  const std::string what = cur.next();
  if (verb == "start" && what == "moving") return EventAction::kStartMoving;
  if (verb == "stop" && what == "moving") return EventAction::kStopMoving;
  if (verb == "start" && what == "rotating") return EventAction::kStartRotating;
  if (verb == "stop" && what == "rotating") return EventAction::kStopRotating;
  throw std::runtime_error("question parse: bad event phrase '" + verb + " " + what + "'");
}

std::optional<QueriedAttr> parse_attr_word(const std::string& w) {
  if (w == "color") return QueriedAttr::kColor;
  if (w == "shape") return QueriedAttr::kShape;
  if (w == "size") return QueriedAttr::kSize;
  return std::nullopt;
}

bool parse_start_end(TokenCursor& cur) {  // true == end
  cur.expect("at");
  cur.expect("the");
  const std::string w = cur.next();
  if (w == "end") return true;
  if (w == "start") return false;
  throw std::runtime_error("question parse: expected start/end, got '" + w + "'");
}

Program parse_impl(TokenCursor& cur) {
  const std::string head = cur.next();
  if (head == "is") {
    const std::string second = cur.next();
    if (second == "there") {
      cur.expect("a");
      Filter f = parse_filter(cur, false);
      if (cur.peek() == "moving") {
        cur.next();
        ExistMovingProgram q;
        q.f = f;
        q.at_end = parse_start_end(cur);
        return q;
      }
      return ExistProgram{f};
    }
    if (second == "the") {
      if (cur.peek() == "number") {
        cur.next();
        cur.expect("of");
        IntCompareProgram q;
        q.mode = IntCompareProgram::kEqual;
        q.a = parse_filter(cur, true);
        cur.expect("equal");
        cur.expect("to");
        cur.expect("the");
        cur.expect("number");
        cur.expect("of");
        q.b = parse_filter(cur, true);
        return q;
      }
      RelPositionProgram q;
      q.a = parse_filter(cur, false);
      const std::string side = cur.next();
      if (side == "left") q.left = true;
      else if (side == "right") q.left = false;
      else throw std::runtime_error("question parse: expected left/right, got '" + side + "'");
      cur.expect("of");
      cur.expect("the");
      q.b = parse_filter(cur, false);
      q.at_end = parse_start_end(cur);
      return q;
    }
    throw std::runtime_error("question parse: unexpected token '" + second + "' after 'is'");
  }
  if (head == "did") {
    cur.expect("the");
    EventOrderProgram q;
    q.a = parse_filter(cur, false);
    q.ea = parse_event(cur);
    const std::string order = cur.next();
    if (order == "before") q.before = true;
    else if (order == "after") q.before = false;
    else throw std::runtime_error("question parse: expected before/after, got '" + order + "'");
    cur.expect("the");
    q.b = parse_filter(cur, false);
    q.eb = parse_event(cur);
    return q;
  }
  if (head == "how") {
    cur.expect("many");
    Filter f = parse_filter(cur, true);
    if (cur.peek() == "are") {
      cur.next();
      cur.expect("there");
      return CountProgram{f};
    }
    CountEventProgram q;
    q.f = f;
    q.e = parse_event(cur);
    return q;
  }
  if (head == "what") {
    const std::string attr = cur.next();
    if (attr == "direction") {
      cur.expect("does");
      cur.expect("the");
      QueryDirProgram q;
      q.f = parse_filter(cur, false);
      cur.expect("move");
      return q;
    }
    const auto which = parse_attr_word(attr);
    if (!which) throw std::runtime_error("question parse: unknown attribute '" + attr + "'");
    cur.expect("is");
    cur.expect("the");
    if (cur.peek() == "leftmost" || cur.peek() == "rightmost") {
      QueryExtremeProgram q;
      q.which = *which;
      q.leftmost = cur.next() == "leftmost";
      cur.expect("object");
      q.at_end = parse_start_end(cur);
      return q;
    }
    Filter f = parse_filter(cur, false);
    if (!cur.at_end() && cur.peek() == "that") {
      if (f.size || f.color || f.shape) {
        throw std::runtime_error("question parse: ordinal questions use the bare 'object' noun");
      }
      cur.next();
      QueryEventOrdinalProgram q;
      q.which = *which;
      q.e = parse_event(cur);
      const std::string ord = cur.next();
      if (ord == "first") q.first = true;
      else if (ord == "last") q.first = false;
      else throw std::runtime_error("question parse: expected first/last, got '" + ord + "'");
      return q;
    }
    QueryAttrProgram q;
    q.which = *which;
    q.f = f;
    return q;
  }
  if (head == "are") {
    cur.expect("there");
    const std::string cmp = cur.next();
    IntCompareProgram q;
    if (cmp == "more") q.mode = IntCompareProgram::kMore;
    else if (cmp == "fewer") q.mode = IntCompareProgram::kFewer;
    else throw std::runtime_error("question parse: expected more/fewer, got '" + cmp + "'");
    q.a = parse_filter(cur, true);
    cur.expect("than");
    q.b = parse_filter(cur, true);
    return q;
  }
  if (head == "does") {
    cur.expect("the");
    Filter a = parse_filter(cur, false);
    const std::string verb = cur.next();
    if (verb == "have") {
      cur.expect("the");
      cur.expect("same");
      const auto which = parse_attr_word(cur.next());
      if (!which) throw std::runtime_error("question parse: unknown compared attribute");
      cur.expect("as");
      cur.expect("the");
      AttrCompareProgram q;
      q.a = a;
      q.which = *which;
      q.b = parse_filter(cur, false);
      return q;
    }
    if (verb == "move") {
      cur.expect("in");
      cur.expect("the");
      cur.expect("same");
      cur.expect("direction");
      cur.expect("as");
      cur.expect("the");
      SameDirectionProgram q;
      q.a = a;
      q.b = parse_filter(cur, false);
      return q;
    }
    throw std::runtime_error("question parse: unexpected verb '" + verb + "'");
  }
  throw std::runtime_error("question parse: unknown question head '" + head + "'");
}

}  // namespace

Program parse_tokens(const std::vector<std::string>& tokens) {
  TokenCursor cur(tokens);
  Program p = parse_impl(cur);
  cur.expect("?");
  if (!cur.at_end()) throw std::runtime_error("question parse: trailing tokens after '?'");
  return p;
}

// ---------------------------------------------------------------------------
// evaluation

namespace {

std::vector<const ObjectSpec*> matched(const SceneSpec& scene, const Filter& f) {
  std::vector<const ObjectSpec*> out;
  for (const ObjectSpec& o : scene.objects) {
    if (f.matches(o)) out.push_back(&o);
  }
  return out;
}

const ObjectSpec* unique_match(const SceneSpec& scene, const Filter& f) {
  auto m = matched(scene, f);
  return m.size() == 1 ? m[0] : nullptr;
}

std::string attr_value(const ObjectSpec& o, QueriedAttr which) {
  switch (which) {
    case QueriedAttr::kColor: return to_word(o.color);
    case QueriedAttr::kShape: return to_word(o.shape);
    case QueriedAttr::kSize: return to_word(o.size);
  }
  return "?";
}

std::string yes_no(bool b) { return b ? "yes" : "no"; }

}  // namespace

std::optional<std::string> eval_program(const Program& p, const SceneSpec& scene) {
  const int last = scene.frame_count - 1;
  struct Visitor {
    const SceneSpec& scene;
    int last;

    std::optional<std::string> operator()(const ExistProgram& q) {
      return yes_no(!matched(scene, q.f).empty());
    }
    std::optional<std::string> operator()(const ExistMovingProgram& q) {
      const int frame = q.at_end ? last : 0;
      for (const ObjectSpec* o : matched(scene, q.f)) {
        if (o->moving_at(frame)) return yes_no(true);
      }
      return yes_no(false);
    }
    std::optional<std::string> operator()(const EventOrderProgram& q) {
      const ObjectSpec* a = unique_match(scene, q.a);
      const ObjectSpec* b = unique_match(scene, q.b);
      if (!a || !b || a->id == b->id) return std::nullopt;
      const auto fa = a->event_frame(q.ea);
      const auto fb = b->event_frame(q.eb);
      if (!fa || !fb) return std::nullopt;
      return yes_no(q.before ? *fa < *fb : *fa > *fb);
    }
    std::optional<std::string> operator()(const CountProgram& q) {
      return std::to_string(matched(scene, q.f).size());
    }
    std::optional<std::string> operator()(const CountEventProgram& q) {
      std::size_t n = 0;
      for (const ObjectSpec* o : matched(scene, q.f)) {
        if (o->event_frame(q.e)) ++n;
      }
      return std::to_string(n);
    }
    std::optional<std::string> operator()(const QueryAttrProgram& q) {
      const ObjectSpec* o = unique_match(scene, q.f);
      if (!o) return std::nullopt;
      return attr_value(*o, q.which);
    }
    std::optional<std::string> operator()(const QueryDirProgram& q) {
      const ObjectSpec* o = unique_match(scene, q.f);
      if (!o) return std::nullopt;
      const auto dir = o->direction();
      if (!dir) return std::nullopt;
      return to_word(*dir);
    }
    std::optional<std::string> operator()(const QueryEventOrdinalProgram& q) {
      const ObjectSpec* best = nullptr;
      int best_frame = 0;
      bool tie = false;
      for (const ObjectSpec& o : scene.objects) {
        const auto f = o.event_frame(q.e);
        if (!f) continue;
        if (!best || (q.first ? *f < best_frame : *f > best_frame)) {
          best = &o;
          best_frame = *f;
          tie = false;
        } else if (*f == best_frame) {
          tie = true;
        }
      }
      if (!best || tie) return std::nullopt;
      return attr_value(*best, q.which);
    }
    std::optional<std::string> operator()(const QueryExtremeProgram& q) {
      if (scene.objects.empty()) return std::nullopt;
      const int frame = q.at_end ? last : 0;
      const ObjectSpec* best = nullptr;
      double best_x = 0.0;
      bool tie = false;
      for (const ObjectSpec& o : scene.objects) {
        const double x = o.trajectory[frame].cx;
        if (!best || (q.leftmost ? x < best_x : x > best_x)) {
          if (best && std::fabs(x - best_x) < 1e-9) tie = true;
          else tie = false;
          best = &o;
          best_x = x;
        } else if (std::fabs(x - best_x) < 1e-9) {
          tie = true;
        }
      }
      if (!best || tie) return std::nullopt;
      return attr_value(*best, q.which);
    }
    std::optional<std::string> operator()(const IntCompareProgram& q) {
      const auto na = matched(scene, q.a).size();
      const auto nb = matched(scene, q.b).size();
      switch (q.mode) {
        case IntCompareProgram::kMore: return yes_no(na > nb);
        case IntCompareProgram::kFewer: return yes_no(na < nb);
        case IntCompareProgram::kEqual: return yes_no(na == nb);
      }
      return std::nullopt;
    }
    std::optional<std::string> operator()(const AttrCompareProgram& q) {
      const ObjectSpec* a = unique_match(scene, q.a);
      const ObjectSpec* b = unique_match(scene, q.b);
      if (!a || !b || a->id == b->id) return std::nullopt;
      return yes_no(attr_value(*a, q.which) == attr_value(*b, q.which));
    }
    std::optional<std::string> operator()(const SameDirectionProgram& q) {
      const ObjectSpec* a = unique_match(scene, q.a);
      const ObjectSpec* b = unique_match(scene, q.b);
      if (!a || !b || a->id == b->id) return std::nullopt;
      const auto da = a->direction();
      const auto db = b->direction();
      if (!da || !db) return std::nullopt;
      return yes_no(*da == *db);
    }
    std::optional<std::string> operator()(const RelPositionProgram& q) {
      const ObjectSpec* a = unique_match(scene, q.a);
      const ObjectSpec* b = unique_match(scene, q.b);
      if (!a || !b || a->id == b->id) return std::nullopt;
      const int frame = q.at_end ? last : 0;
      const double xa = a->trajectory[frame].cx;
      const double xb = b->trajectory[frame].cx;
      if (std::fabs(xa - xb) < 1e-9) return std::nullopt;
      return yes_no(q.left ? xa < xb : xa > xb);
    }
  };
  return std::visit(Visitor{scene, last}, p);
}

// ---------------------------------------------------------------------------
// generation

namespace {

// The 7 non-empty attribute subsets, as bit masks over (size, color, shape).
constexpr int kSubsets[7] = {0b100, 0b010, 0b001, 0b110, 0b101, 0b011, 0b111};

Filter filter_from_object(const ObjectSpec& o, int mask) {
  Filter f;
  if (mask & 0b100) f.size = o.size;
  if (mask & 0b010) f.color = o.color;
  if (mask & 0b001) f.shape = o.shape;
  return f;
}

Filter random_filter(Rng& rng, bool allow_empty) {
  Filter f;
  int mask = allow_empty ? rng.range(0, 7) : kSubsets[rng.below(7)];
  if (mask & 0b100) f.size = static_cast<ObjSize>(rng.range(0, kSizeCount - 1));
  if (mask & 0b010) f.color = static_cast<Color>(rng.range(0, kColorCount - 1));
  if (mask & 0b001) f.shape = static_cast<Shape>(rng.range(0, kShapeCount - 1));
  return f;
}

/// A filter built from `o` that matches exactly one object of the scene and
/// avoids the excluded attribute, if one exists.
std::optional<Filter> unique_filter_for(const SceneSpec& scene, const ObjectSpec& o, Rng& rng,
                                        std::optional<QueriedAttr> exclude = std::nullopt) {
  std::array<int, 7> order = {0, 1, 2, 3, 4, 5, 6};
  std::vector<int> shuffled(order.begin(), order.end());
  rng.shuffle(shuffled);
  for (int idx : shuffled) {
    const int mask = kSubsets[idx];
    if (exclude == QueriedAttr::kSize && (mask & 0b100)) continue;
    if (exclude == QueriedAttr::kColor && (mask & 0b010)) continue;
    if (exclude == QueriedAttr::kShape && (mask & 0b001)) continue;
    Filter f = filter_from_object(o, mask);
    if (unique_match(scene, f) == &o) return f;
  }
  return std::nullopt;
}

const ObjectSpec* random_object(const SceneSpec& scene, Rng& rng) {
  if (scene.objects.empty()) return nullptr;
  return &scene.objects[rng.below(scene.objects.size())];
}

QueriedAttr random_attr(Rng& rng) { return static_cast<QueriedAttr>(rng.range(0, 2)); }

EventAction random_action(Rng& rng) { return static_cast<EventAction>(rng.range(0, 3)); }

}  // namespace

std::vector<QAItem> generate_qa(const SceneSpec& scene, std::uint64_t seed,
                                const QaGenConfig& cfg) {
  Rng rng(subseed(seed, "qa", scene.seed));
  const AnswerSpace answers(cfg.max_count);
  std::vector<QAItem> items;

  auto try_emit = [&](const Program& p, const char* want) -> bool {
    const auto ans = eval_program(p, scene);
    if (!ans) return false;
    if (want && *ans != want) return false;
    if (category_of(p) == QCategory::kCount &&
        std::stoi(*ans) > cfg.max_count) {
      return false;
    }
    QAItem item;
    item.question = render_tokens(p);
    item.category = category_of(p);
    item.answer = answers.index_of(*ans);
    items.push_back(std::move(item));
    return true;
  };

  // --- exist: alternate yes/no targets ---------------------------------
  bool want_yes = rng.chance(0.5);
  for (int k = 0; k < cfg.per_category[0]; ++k, want_yes = !want_yes) {
    const char* want = want_yes ? "yes" : "no";
    bool emitted = false;
    for (int attempt = 0; attempt < 80 && !emitted; ++attempt) {
      const bool temporal = rng.chance(cfg.temporal_bias);
      if (temporal && rng.chance(0.5)) {
        // event order between two uniquely identified objects
        const ObjectSpec* a = random_object(scene, rng);
        const ObjectSpec* b = random_object(scene, rng);
        if (!a || !b || a->id == b->id || a->events.empty() || b->events.empty()) continue;
        EventOrderProgram q;
        q.ea = a->events[rng.below(a->events.size())].action;
        q.eb = b->events[rng.below(b->events.size())].action;
        auto fa = unique_filter_for(scene, *a, rng);
        auto fb = unique_filter_for(scene, *b, rng);
        if (!fa || !fb) continue;
        q.a = *fa;
        q.b = *fb;
        q.before = rng.chance(0.5);
        if (try_emit(q, want)) { emitted = true; break; }
        q.before = !q.before;
        if (try_emit(q, want)) { emitted = true; break; }
      } else if (temporal) {
        ExistMovingProgram q;
        q.at_end = rng.chance(0.5);
        if (want_yes) {
          const ObjectSpec* o = random_object(scene, rng);
          if (!o) continue;
          q.f = filter_from_object(*o, kSubsets[rng.below(7)]);
        } else {
          q.f = random_filter(rng, false);
        }
        if (try_emit(q, want)) { emitted = true; break; }
      } else {
        ExistProgram q;
        if (want_yes) {
          const ObjectSpec* o = random_object(scene, rng);
          if (!o) continue;
          q.f = filter_from_object(*o, kSubsets[rng.below(7)]);
        } else {
          q.f = random_filter(rng, false);
        }
        if (try_emit(q, want)) { emitted = true; break; }
      }
    }
    // fall back to an untargeted plain exist question
    if (!emitted) {
      for (int attempt = 0; attempt < 20 && !emitted; ++attempt) {
        emitted = try_emit(ExistProgram{random_filter(rng, false)}, nullptr);
      }
    }
  }

  // --- count -------------------------------------------------------------
  for (int k = 0; k < cfg.per_category[1]; ++k) {
    bool emitted = false;
    for (int attempt = 0; attempt < 40 && !emitted; ++attempt) {
      if (rng.chance(cfg.temporal_bias)) {
        CountEventProgram q;
        q.f = rng.chance(0.5) ? Filter{} : random_filter(rng, true);
        q.e = random_action(rng);
        emitted = try_emit(q, nullptr);
      } else {
        CountProgram q;
        // bias toward filters that actually match something
        if (const ObjectSpec* o = random_object(scene, rng); o && rng.chance(0.7)) {
          q.f = filter_from_object(*o, rng.range(0, 7));
        } else {
          q.f = random_filter(rng, true);
        }
        emitted = try_emit(q, nullptr);
      }
    }
  }

  // --- attribute query -----------------------------------------------------
  for (int k = 0; k < cfg.per_category[2]; ++k) {
    bool emitted = false;
    for (int attempt = 0; attempt < 60 && !emitted; ++attempt) {
      const double pick = rng.uniform();
      if (pick < cfg.temporal_bias * 0.5) {
        QueryEventOrdinalProgram q;
        q.which = random_attr(rng);
        q.e = random_action(rng);
        q.first = rng.chance(0.5);
        emitted = try_emit(q, nullptr);
      } else if (pick < cfg.temporal_bias) {
        if (rng.chance(0.5)) {
          QueryExtremeProgram q;
          q.which = random_attr(rng);
          q.leftmost = rng.chance(0.5);
          q.at_end = rng.chance(0.5);
          emitted = try_emit(q, nullptr);
        } else {
          const ObjectSpec* o = random_object(scene, rng);
          if (!o) continue;
          auto f = unique_filter_for(scene, *o, rng);
          if (!f) continue;
          QueryDirProgram q;
          q.f = *f;
          emitted = try_emit(q, nullptr);
        }
      } else {
        const ObjectSpec* o = random_object(scene, rng);
        if (!o) continue;
        QueryAttrProgram q;
        q.which = random_attr(rng);
        auto f = unique_filter_for(scene, *o, rng, q.which);
        if (!f) continue;
        q.f = *f;
        emitted = try_emit(q, nullptr);
      }
    }
  }

  // --- integer comparison --------------------------------------------------
  want_yes = rng.chance(0.5);
  for (int k = 0; k < cfg.per_category[3]; ++k, want_yes = !want_yes) {
    const char* want = want_yes ? "yes" : "no";
    bool emitted = false;
    for (int attempt = 0; attempt < 60 && !emitted; ++attempt) {
      IntCompareProgram q;
      q.mode = static_cast<IntCompareProgram::Mode>(rng.range(0, 2));
      if (const ObjectSpec* o = random_object(scene, rng); o && rng.chance(0.7)) {
        q.a = filter_from_object(*o, rng.range(0, 7));
      } else {
        q.a = random_filter(rng, true);
      }
      if (const ObjectSpec* o = random_object(scene, rng); o && rng.chance(0.7)) {
        q.b = filter_from_object(*o, rng.range(0, 7));
      } else {
        q.b = random_filter(rng, true);
      }
      emitted = try_emit(q, want);
    }
    if (!emitted) {
      for (int attempt = 0; attempt < 20 && !emitted; ++attempt) {
        IntCompareProgram q;
        q.mode = static_cast<IntCompareProgram::Mode>(rng.range(0, 2));
        q.a = random_filter(rng, true);
        q.b = random_filter(rng, true);
        emitted = try_emit(q, nullptr);
      }
    }
  }

  // --- attribute comparison -------------------------------------------------
  want_yes = rng.chance(0.5);
  for (int k = 0; k < cfg.per_category[4]; ++k, want_yes = !want_yes) {
    const char* want = want_yes ? "yes" : "no";
    bool emitted = false;
    for (int attempt = 0; attempt < 80 && !emitted; ++attempt) {
      const ObjectSpec* a = random_object(scene, rng);
      const ObjectSpec* b = random_object(scene, rng);
      if (!a || !b || a->id == b->id) continue;
      const double pick = rng.uniform();
      if (pick < cfg.temporal_bias * 0.5) {
        auto fa = unique_filter_for(scene, *a, rng);
        auto fb = unique_filter_for(scene, *b, rng);
        if (!fa || !fb) continue;
        SameDirectionProgram q;
        q.a = *fa;
        q.b = *fb;
        emitted = try_emit(q, want);
      } else if (pick < cfg.temporal_bias) {
        auto fa = unique_filter_for(scene, *a, rng);
        auto fb = unique_filter_for(scene, *b, rng);
        if (!fa || !fb) continue;
        RelPositionProgram q;
        q.a = *fa;
        q.b = *fb;
        q.left = rng.chance(0.5);
        q.at_end = rng.chance(0.5);
        if (try_emit(q, want)) { emitted = true; break; }
        q.left = !q.left;
        emitted = try_emit(q, want);
      } else {
        AttrCompareProgram q;
        q.which = random_attr(rng);
        auto fa = unique_filter_for(scene, *a, rng, q.which);
        auto fb = unique_filter_for(scene, *b, rng, q.which);
        if (!fa || !fb) continue;
        q.a = *fa;
        q.b = *fb;
        emitted = try_emit(q, want);
      }
    }
    if (!emitted) {
      // last resort: any satisfiable attribute comparison
      for (int attempt = 0; attempt < 40 && !emitted; ++attempt) {
        const ObjectSpec* a = random_object(scene, rng);
        const ObjectSpec* b = random_object(scene, rng);
        if (!a || !b || a->id == b->id) continue;
        AttrCompareProgram q;
        q.which = random_attr(rng);
        auto fa = unique_filter_for(scene, *a, rng, q.which);
        auto fb = unique_filter_for(scene, *b, rng, q.which);
        if (!fa || !fb) continue;
        q.a = *fa;
        q.b = *fb;
        emitted = try_emit(q, nullptr);
      }
    }
  }

  return items;
}

std::vector<std::string> question_vocabulary(int /*max_count*/) {
  std::vector<std::string> vocab = {
      "is",   "there", "a",       "the",   "did",    "how",   "many",     "what",   "are",
      "does", "more",  "fewer",   "than",  "number", "of",    "equal",    "to",     "have",
      "same", "as",    "move",    "moving", "in",    "direction", "at",   "start",  "end",
      "stop", "rotating", "before", "after", "that", "first", "last",     "object", "objects",
      "left", "right", "leftmost", "rightmost", "color", "shape", "size", "?"};
  for (int s = 0; s < kShapeCount; ++s) {
    vocab.push_back(to_word(static_cast<Shape>(s)));
    vocab.push_back(plural_word(static_cast<Shape>(s)));
  }
  for (int c = 0; c < kColorCount; ++c) vocab.push_back(to_word(static_cast<Color>(c)));
  vocab.push_back("small");
  vocab.push_back("big");
  return vocab;
}

}  // namespace ovqa::scenegen
