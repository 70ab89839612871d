#pragma once

// Directed trees with root and shoot lines, the ancestor order, right
// subtrees and quotient trees.

#include <json.hpp>

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nert/modespace.hpp"

namespace nert {

enum class LineKind { Internal, Root, Shoot };

inline const char* kind_name(LineKind k) {
  switch (k) {
    case LineKind::Internal: return "internal";
    case LineKind::Root: return "root";
    default: return "shoot";
  }
}

// Internal line: upper = parent, lower = child.  Root line: upper = 0 stands
// for "+", lower = vertex.  Shoot line: upper = vertex, lower = 0 stands for
// "-", and `shoot` carries its label.
struct Line {
  int id = 0;
  LineKind kind = LineKind::Internal;
  int upper = 0;
  int lower = 0;
  int shoot = 0;

  auto key() const { return std::tuple(static_cast<int>(kind), upper, lower, shoot); }
  friend bool operator==(const Line& a, const Line& b) = default;
};

class DirectedTree {
 public:
  DirectedTree() = default;
  DirectedTree(std::vector<int> vertices, std::vector<Line> lines)
      : vertices_(std::move(vertices)), lines_(std::move(lines)) {
    std::sort(vertices_.begin(), vertices_.end());
    if (std::adjacent_find(vertices_.begin(), vertices_.end()) != vertices_.end())
      throw Error("DirectedTree: duplicate vertex label");
    canonicalize();
    for (const Line& l : lines_) {
      auto has = [&](int v) { return std::binary_search(vertices_.begin(), vertices_.end(), v); };
      if (l.kind == LineKind::Internal && !(has(l.upper) && has(l.lower) && l.upper != l.lower))
        throw Error("DirectedTree: internal line with bad ends");
      if (l.kind == LineKind::Root && !has(l.lower)) throw Error("DirectedTree: root line on unknown vertex");
      if (l.kind == LineKind::Shoot && !has(l.upper)) throw Error("DirectedTree: shoot line on unknown vertex");
    }
  }

  // Parent-function constructor: parent[v-1] = 0 marks a root vertex.
  // shoot_at[j] is the vertex receiving shoot j+1.  Line ids follow the
  // canonical order.
  static DirectedTree from_parents(const std::vector<int>& parent, const std::vector<int>& shoot_at = {}) {
    const int n = static_cast<int>(parent.size());
    std::vector<int> vs(n);
    std::iota(vs.begin(), vs.end(), 1);
    std::vector<Line> lines;
    for (int v = 1; v <= n; ++v) {
      if (parent[v - 1] == 0)
        lines.push_back({0, LineKind::Root, 0, v, 0});
      else
        lines.push_back({0, LineKind::Internal, parent[v - 1], v, 0});
    }
    for (std::size_t j = 0; j < shoot_at.size(); ++j)
      lines.push_back({0, LineKind::Shoot, shoot_at[j], 0, static_cast<int>(j) + 1});
    DirectedTree t(vs, lines);
    t.renumber();
    return t;
  }

  const std::vector<int>& vertices() const { return vertices_; }
  const std::vector<Line>& lines() const { return lines_; }
  int vertex_count() const { return static_cast<int>(vertices_.size()); }
  bool has_vertex(int v) const { return std::binary_search(vertices_.begin(), vertices_.end(), v); }

  const Line& line(int id) const {
    for (const Line& l : lines_)
      if (l.id == id) return l;
    throw Error("DirectedTree: unknown line id " + std::to_string(id));
  }

  std::vector<Line> lines_of(LineKind k) const {
    std::vector<Line> out;
    for (const Line& l : lines_)
      if (l.kind == k) out.push_back(l);
    return out;
  }
  int shoot_count() const { return static_cast<int>(lines_of(LineKind::Shoot).size()); }
  int root_count() const { return static_cast<int>(lines_of(LineKind::Root).size()); }

  // Line leaving v upward (internal to its parent, or a root line).
  std::optional<Line> up_line(int v) const {
    for (const Line& l : lines_)
      if ((l.kind == LineKind::Internal || l.kind == LineKind::Root) && l.lower == v) return l;
    return std::nullopt;
  }
  int parent(int v) const {
    auto l = up_line(v);
    return (l && l->kind == LineKind::Internal) ? l->upper : 0;
  }
  std::vector<int> children(int v) const {
    std::vector<int> c;
    for (const Line& l : lines_)
      if (l.kind == LineKind::Internal && l.upper == v) c.push_back(l.lower);
    return c;
  }
  std::vector<int> shoots_at(int v) const {
    std::vector<int> s;
    for (const Line& l : lines_)
      if (l.kind == LineKind::Shoot && l.upper == v) s.push_back(l.shoot);
    return s;
  }
  // Lines coming into v: internal lines from children plus shoots.
  int fan_in(int v) const {
    int c = 0;
    for (const Line& l : lines_)
      if ((l.kind == LineKind::Internal || l.kind == LineKind::Shoot) && l.upper == v) ++c;
    return c;
  }

  // Connected components of the vertex graph (internal lines only).
  std::vector<std::vector<int>> components() const {
    std::map<int, int> root;
    for (int v : vertices_) root[v] = v;
    std::function<int(int)> find = [&](int v) { return root[v] == v ? v : root[v] = find(root[v]); };
    for (const Line& l : lines_)
      if (l.kind == LineKind::Internal) {
        int a = find(l.upper), b = find(l.lower);
        if (a != b) root[std::max(a, b)] = std::min(a, b);
      }
    std::map<int, std::vector<int>> groups;
    for (int v : vertices_) groups[find(v)].push_back(v);
    std::vector<std::vector<int>> out;
    for (auto& [k, g] : groups) out.push_back(g);
    return out;
  }

  bool acyclic() const {
    int internal = static_cast<int>(lines_of(LineKind::Internal).size());
    return internal == vertex_count() - static_cast<int>(components().size());
  }

  // Each component carries exactly one root line, and internal lines point
  // from parent to child consistently (no vertex with two parents).
  bool right() const {
    if (!acyclic()) return false;
    std::map<int, int> ups;
    for (const Line& l : lines_)
      if (l.kind != LineKind::Shoot) ups[l.lower]++;
    for (int v : vertices_)
      if (ups[v] != 1) return false;
    for (const auto& comp : components()) {
      int roots = 0;
      for (int v : comp) {
        auto u = up_line(v);
        if (u && u->kind == LineKind::Root) ++roots;
      }
      if (roots != 1) return false;
    }
    return true;
  }

  bool connected() const { return components().size() == 1; }

  // Root vertex of the component containing v.
  int top(int v) const {
    while (parent(v) != 0) v = parent(v);
    return v;
  }

  friend bool operator==(const DirectedTree& a, const DirectedTree& b) {
    return a.vertices_ == b.vertices_ && a.lines_ == b.lines_;
  }
  friend bool operator<(const DirectedTree& a, const DirectedTree& b) {
    if (a.vertices_ != b.vertices_) return a.vertices_ < b.vertices_;
    return std::lexicographical_compare(a.lines_.begin(), a.lines_.end(), b.lines_.begin(), b.lines_.end(),
                                        [](const Line& x, const Line& y) {
                                          return std::tuple(x.key(), x.id) < std::tuple(y.key(), y.id);
                                        });
  }

  // Structure-only comparison ignoring line ids.
  bool same_shape(const DirectedTree& o) const {
    if (vertices_ != o.vertices_ || lines_.size() != o.lines_.size()) return false;
    for (std::size_t i = 0; i < lines_.size(); ++i)
      if (lines_[i].key() != o.lines_[i].key()) return false;
    return true;
  }

  // Reassigns line ids 1..L in canonical order.
  void renumber() {
    for (std::size_t i = 0; i < lines_.size(); ++i) lines_[i].id = static_cast<int>(i) + 1;
  }

 private:
  void canonicalize() {
    std::sort(lines_.begin(), lines_.end(), [](const Line& a, const Line& b) { return a.key() < b.key(); });
  }

  std::vector<int> vertices_;
  std::vector<Line> lines_;
};

// ---------------------------------------------------------------------------

struct EnumerateOptions {
  int max_in = 4;
  bool connected = false;
};

// All right forests on vertices 1..n with `shoots` labelled shoots, fan-in
// bounded by max_in.  Each forest corresponds to one parent function.
inline std::vector<DirectedTree> enumerate_trees(int n, int shoots = 0, EnumerateOptions opt = {}) {
  std::vector<DirectedTree> out;
  if (n < 1) return out;
  std::vector<int> parent(n, 0);
  auto acyclic = [&] {
    for (int v = 1; v <= n; ++v) {
      int u = v, steps = 0;
      while (u != 0 && steps <= n) {
        u = parent[u - 1];
        ++steps;
      }
      if (u != 0) return false;
    }
    return true;
  };
  std::vector<int> shoot_at(shoots, 1);
  std::function<void(int)> assign_shoots = [&](int j) {
    if (j == shoots) {
      DirectedTree t = DirectedTree::from_parents(parent, shoot_at);
      for (int v = 1; v <= n; ++v)
        if (t.fan_in(v) > opt.max_in) return;
      if (opt.connected && !t.connected()) return;
      out.push_back(std::move(t));
      return;
    }
    for (int v = 1; v <= n; ++v) {
      shoot_at[j] = v;
      assign_shoots(j + 1);
    }
  };
  std::function<void(int)> rec = [&](int v) {
    if (v > n) {
      if (acyclic()) assign_shoots(0);
      return;
    }
    for (int p = 0; p <= n; ++p) {
      if (p == v) continue;
      parent[v - 1] = p;
      rec(v + 1);
    }
  };
  rec(1);
  std::sort(out.begin(), out.end());
  return out;
}

// less(u, v): v is a proper ancestor of u.
class PartialOrder {
 public:
  explicit PartialOrder(const DirectedTree& t) : t_(t) {
    if (!t.right()) throw Error("partial_order: tree must be right");
    for (int v : t.vertices()) {
      int u = t.parent(v);
      while (u != 0) {
        above_.insert({v, u});
        u = t.parent(u);
      }
    }
  }
  bool less(int u, int v) const { return above_.count({u, v}) > 0; }
  bool comparable(int u, int v) const { return u == v || less(u, v) || less(v, u); }
  const std::set<std::pair<int, int>>& pairs() const { return above_; }

 private:
  DirectedTree t_;
  std::set<std::pair<int, int>> above_;
};

inline PartialOrder partial_order(const DirectedTree& t) { return PartialOrder(t); }

struct RightSubtree {
  std::vector<int> antichain;
  DirectedTree tree;
};

// One subtree per nonempty antichain: the down-closure of the antichain, with
// the line leaving each chosen vertex redirected to (v, +).
inline RightSubtree right_subtree(const DirectedTree& t, const std::vector<int>& antichain) {
  PartialOrder po(t);
  for (std::size_t i = 0; i < antichain.size(); ++i)
    for (std::size_t j = i + 1; j < antichain.size(); ++j)
      if (po.comparable(antichain[i], antichain[j])) throw Error("right_subtree: vertices are comparable");
  std::vector<int> vs;
  for (int v : t.vertices())
    for (int a : antichain)
      if (v == a || po.less(v, a)) {
        vs.push_back(v);
        break;
      }
  auto in = [&](int v) { return std::find(vs.begin(), vs.end(), v) != vs.end(); };
  auto chosen = [&](int v) { return std::find(antichain.begin(), antichain.end(), v) != antichain.end(); };
  std::vector<Line> lines;
  for (const Line& l : t.lines()) {
    if (l.kind == LineKind::Shoot) {
      if (in(l.upper)) lines.push_back(l);
    } else if (in(l.lower)) {
      if (chosen(l.lower))
        lines.push_back({l.id, LineKind::Root, 0, l.lower, 0});
      else
        lines.push_back(l);
    }
  }
  std::vector<int> ac = antichain;
  std::sort(ac.begin(), ac.end());
  return {ac, DirectedTree(vs, lines)};
}

inline std::vector<RightSubtree> right_subtrees(const DirectedTree& t) {
  PartialOrder po(t);
  const auto& vs = t.vertices();
  const int n = static_cast<int>(vs.size());
  std::vector<RightSubtree> out;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<int> a;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) a.push_back(vs[i]);
    bool ok = true;
    for (std::size_t i = 0; i < a.size() && ok; ++i)
      for (std::size_t j = i + 1; j < a.size() && ok; ++j) ok = !po.comparable(a[i], a[j]);
    if (ok) out.push_back(right_subtree(t, a));
  }
  return out;
}

// Contracts the internal lines in A.  A merged vertex takes the smallest
// label of its block; labels are then compressed to 1..n' preserving order.
inline DirectedTree quotient_tree(const DirectedTree& t, const std::set<int>& a) {
  std::map<int, int> rep;
  for (int v : t.vertices()) rep[v] = v;
  std::function<int(int)> find = [&](int v) { return rep[v] == v ? v : rep[v] = find(rep[v]); };
  for (int id : a) {
    const Line& l = t.line(id);
    if (l.kind != LineKind::Internal) throw Error("quotient_tree: only internal lines can be contracted");
    int x = find(l.upper), y = find(l.lower);
    if (x != y) rep[std::max(x, y)] = std::min(x, y);
  }
  std::set<int> reps;
  for (int v : t.vertices()) reps.insert(find(v));
  std::map<int, int> compress;
  int next = 1;
  for (int r : reps) compress[r] = next++;
  auto img = [&](int v) { return v == 0 ? 0 : compress[find(v)]; };
  std::vector<int> vs;
  for (int r : reps) vs.push_back(compress[r]);
  std::vector<Line> lines;
  for (const Line& l : t.lines()) {
    if (a.count(l.id)) continue;
    Line m = l;
    m.upper = img(l.upper);
    m.lower = img(l.lower);
    lines.push_back(m);
  }
  return DirectedTree(vs, lines);
}

// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const DirectedTree& t) {
  nlohmann::json lines = nlohmann::json::array();
  nlohmann::json shoot_order = nlohmann::json::array();
  for (const Line& l : t.lines()) {
    nlohmann::json ends;
    if (l.kind == LineKind::Internal)
      ends = {l.upper, l.lower};
    else if (l.kind == LineKind::Root)
      ends = {l.lower, "+"};
    else
      ends = {l.upper, "-"};
    lines.push_back({{"id", l.id}, {"kind", kind_name(l.kind)}, {"ends", ends}});
    if (l.kind == LineKind::Shoot) shoot_order.push_back({{"label", l.shoot}, {"line", l.id}});
  }
  return {{"n", t.vertex_count()}, {"vertices", t.vertices()}, {"lines", lines}, {"shoot_order", shoot_order}};
}

inline DirectedTree tree_from_json(const nlohmann::json& j) {
  std::vector<int> vs = j.contains("vertices") ? j.at("vertices").get<std::vector<int>>() : std::vector<int>{};
  if (vs.empty())
    for (int v = 1; v <= j.at("n").get<int>(); ++v) vs.push_back(v);
  std::map<int, int> shoot_label;
  if (j.contains("shoot_order"))
    for (const auto& s : j.at("shoot_order")) shoot_label[s.at("line").get<int>()] = s.at("label").get<int>();
  std::vector<Line> lines;
  for (const auto& l : j.at("lines")) {
    Line m;
    m.id = l.at("id").get<int>();
    std::string k = l.at("kind").get<std::string>();
    const auto& e = l.at("ends");
    if (k == "internal") {
      m.kind = LineKind::Internal;
      m.upper = e[0].get<int>();
      m.lower = e[1].get<int>();
    } else if (k == "root") {
      m.kind = LineKind::Root;
      m.lower = e[0].get<int>();
    } else if (k == "shoot") {
      m.kind = LineKind::Shoot;
      m.upper = e[0].get<int>();
      m.shoot = shoot_label.count(m.id) ? shoot_label[m.id] : 0;
    } else {
      throw Error("tree_from_json: unknown line kind " + k);
    }
    lines.push_back(m);
  }
  return DirectedTree(vs, lines);
}

}  // namespace nert
