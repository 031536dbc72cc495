#pragma once

// DOT subset reader/writer: `digraph` with node and edge statements, bracketed
// attribute lists, edge chains and comments. No subgraphs, ports or HTML.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "hetsched/detail/text.hpp"
#include "hetsched/task_graph.hpp"

namespace hetsched {

class DotParseError : public std::runtime_error {
 public:
  DotParseError(std::size_t line, std::size_t column, const std::string& what)
      : std::runtime_error("dot:" + std::to_string(line) + ":" + std::to_string(column) + ": " +
                           what),
        line_(line),
        column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class UnsupportedFormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DotNodeStmt {
  std::string id;
  Attributes attrs;
};

struct DotEdgeStmt {
  std::string src;
  std::string dst;
  Attributes attrs;
};

struct DotDocument {
  std::string name;
  std::vector<std::variant<DotNodeStmt, DotEdgeStmt>> statements;
};

namespace detail {

class DotLexer {
 public:
  enum class Tok { kId, kPunct, kArrow, kEnd };
  struct Token {
    Tok type;
    std::string text;
    bool quoted = false;
    std::size_t line = 1;
    std::size_t column = 1;
  };

  explicit DotLexer(std::string_view text) : text_(text) {}

  Token next() {
    skip_space_and_comments();
    Token t{Tok::kEnd, {}, false, line_, col_};
    if (pos_ >= text_.size()) return t;
    const char c = text_[pos_];
    if (c == '-' && peek(1) == '>') {
      advance(2);
      t.type = Tok::kArrow;
      t.text = "->";
      return t;
    }
    if (c == '-' && peek(1) == '-') {
      throw UnsupportedFormatError("undirected edge operator '--' is not supported");
    }
    if (std::string_view("{}[];,=").find(c) != std::string_view::npos) {
      advance(1);
      t.type = Tok::kPunct;
      t.text = std::string(1, c);
      return t;
    }
    if (c == '"') {
      advance(1);
      std::string value;
      while (true) {
        if (pos_ >= text_.size()) throw DotParseError(t.line, t.column, "unterminated string");
        const char d = text_[pos_];
        if (d == '\\' && pos_ + 1 < text_.size() &&
            (text_[pos_ + 1] == '"' || text_[pos_ + 1] == '\\')) {
          value.push_back(text_[pos_ + 1]);
          advance(2);
          continue;
        }
        if (d == '"') {
          advance(1);
          break;
        }
        value.push_back(d);
        advance(1);
      }
      t.type = Tok::kId;
      t.text = std::move(value);
      t.quoted = true;
      return t;
    }
    if (is_id_char(c) || c == '-' || c == '.') {
      const auto start = pos_;
      advance(1);
      while (pos_ < text_.size() && (is_id_char(text_[pos_]) || text_[pos_] == '.')) advance(1);
      t.type = Tok::kId;
      t.text = std::string(text_.substr(start, pos_ - start));
      return t;
    }
    throw DotParseError(t.line, t.column, std::string("unexpected character '") + c + "'");
  }

 private:
  static bool is_id_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
           static_cast<unsigned char>(c) >= 0x80;
  }

  char peek(std::size_t ahead) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }

  void advance(std::size_t n) {
    for (std::size_t i = 0; i < n && pos_ < text_.size(); ++i, ++pos_) {
      if (text_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
    }
  }

  void skip_space_and_comments() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance(1);
      } else if (c == '/' && peek(1) == '/') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance(1);
      } else if (c == '#' && col_ == 1) {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance(1);
      } else if (c == '/' && peek(1) == '*') {
        const auto line = line_;
        const auto col = col_;
        advance(2);
        while (pos_ < text_.size() && !(text_[pos_] == '*' && peek(1) == '/')) advance(1);
        if (pos_ >= text_.size()) throw DotParseError(line, col, "unterminated comment");
        advance(2);
      } else {
        return;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

inline bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

class DotParser {
 public:
  using Tok = DotLexer::Tok;
  explicit DotParser(std::string_view text) : lexer_(text) { shift(); }

  DotDocument parse() {
    DotDocument doc;
    if (cur_.type == Tok::kId && iequals(cur_.text, "strict")) {
      throw UnsupportedFormatError("strict graphs are not supported");
    }
    if (cur_.type == Tok::kId && iequals(cur_.text, "graph")) {
      throw UnsupportedFormatError("undirected graphs are not supported; use digraph");
    }
    if (cur_.type != Tok::kId || !iequals(cur_.text, "digraph")) fail("expected 'digraph'");
    shift();
    if (cur_.type == Tok::kId) {
      doc.name = cur_.text;
      shift();
    }
    expect("{");
    while (!is_punct("}")) {
      if (cur_.type == Tok::kEnd) fail("missing '}'");
      statement(doc);
    }
    shift();
    if (cur_.type != Tok::kEnd) fail("trailing content after graph");
    return doc;
  }

 private:
  void statement(DotDocument& doc) {
    if (is_punct(";")) {
      shift();
      return;
    }
    if (cur_.type != Tok::kId) fail("expected a statement");
    if (!cur_.quoted && iequals(cur_.text, "subgraph")) fail("subgraphs are not supported");
    if (!cur_.quoted && (iequals(cur_.text, "node") || iequals(cur_.text, "edge") ||
                         iequals(cur_.text, "graph"))) {
      // default attribute statements carry no task information
      shift();
      if (is_punct("[")) attr_list();
      optional_semicolon();
      return;
    }
    std::string first = cur_.text;
    shift();
    if (is_punct("=")) {
      shift();
      if (cur_.type != Tok::kId) fail("expected a value");
      shift();
      optional_semicolon();
      return;
    }
    if (cur_.type == Tok::kArrow) {
      std::vector<std::string> chain{first};
      while (cur_.type == Tok::kArrow) {
        shift();
        if (cur_.type != Tok::kId) fail("expected a node id after '->'");
        chain.push_back(cur_.text);
        shift();
      }
      Attributes attrs;
      if (is_punct("[")) attrs = attr_list();
      for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
        doc.statements.emplace_back(DotEdgeStmt{chain[i], chain[i + 1], attrs});
      }
    } else {
      Attributes attrs;
      if (is_punct("[")) attrs = attr_list();
      doc.statements.emplace_back(DotNodeStmt{std::move(first), std::move(attrs)});
    }
    optional_semicolon();
  }

  Attributes attr_list() {
    Attributes attrs;
    while (is_punct("[")) {
      shift();
      while (!is_punct("]")) {
        if (cur_.type != Tok::kId) fail("expected an attribute name");
        std::string key = cur_.text;
        shift();
        expect("=");
        if (cur_.type != Tok::kId) fail("expected an attribute value");
        attrs.emplace_back(std::move(key), cur_.text);
        shift();
        if (is_punct(",") || is_punct(";")) shift();
      }
      shift();
    }
    return attrs;
  }

  void optional_semicolon() {
    if (is_punct(";")) shift();
  }

  bool is_punct(std::string_view p) const { return cur_.type == Tok::kPunct && cur_.text == p; }

  void expect(std::string_view p) {
    if (!is_punct(p)) fail("expected '" + std::string(p) + "'");
    shift();
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DotParseError(cur_.line, cur_.column, what);
  }

  void shift() { cur_ = lexer_.next(); }

  DotLexer lexer_;
  DotLexer::Token cur_;
};

inline bool is_plain_id(std::string_view s) {
  if (s.empty()) return false;
  if (std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    return true;
  }
  if (std::isdigit(static_cast<unsigned char>(s.front()))) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

inline std::string quote_id(std::string_view s) {
  if (is_plain_id(s)) return std::string(s);
  std::optional<double> numeric = parse_double(s);
  if (numeric && s.find_first_not_of("0123456789.-") == std::string_view::npos) {
    return std::string(s);
  }
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline bool is_kernel_number(std::string_view s) {
  return !s.empty() && s.size() < 10 &&
         std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

// Presentation attributes written by the partition/trace emitters; they do not
// describe the task and are dropped on read.
inline bool is_presentation_attr(std::string_view key) {
  return key == "part" || key == "color" || key == "fillcolor" || key == "style" ||
         key == "penwidth";
}

template <class T>
T require_number(const std::string& value, std::string_view key, std::string_view where) {
  std::optional<T> v;
  if constexpr (std::is_floating_point_v<T>) {
    v = parse_double(value);
  } else {
    v = parse_int<T>(value);
  }
  if (!v) {
    throw std::invalid_argument("attribute " + std::string(key) + " of " + std::string(where) +
                                " is not a number: '" + value + "'");
  }
  return *v;
}

}  // namespace detail

inline DotDocument parse_dot_document(std::string_view text) {
  return detail::DotParser(text).parse();
}

/// Maps a DOT document onto a task graph. Numeric node names become kernel ids;
/// other names get fresh ids after the largest numeric one, in order of first
/// appearance, and are kept as the kernel's label. A SOURCE root is added when
/// none is declared, and every kernel without inputs gets an edge from it.
inline TaskGraph to_task_graph(const DotDocument& doc) {
  std::vector<std::string> appearance;
  std::set<std::string> seen;
  auto note = [&](const std::string& name) {
    if (seen.insert(name).second) appearance.push_back(name);
  };
  for (const auto& stmt : doc.statements) {
    if (const auto* n = std::get_if<DotNodeStmt>(&stmt)) {
      note(n->id);
    } else {
      const auto& e = std::get<DotEdgeStmt>(stmt);
      note(e.src);
      note(e.dst);
    }
  }

  std::map<std::string, KernelId> ids;
  KernelId max_numeric = 0;
  for (const auto& name : appearance) {
    if (detail::is_kernel_number(name)) {
      const auto id = *detail::parse_int<KernelId>(name);
      ids[name] = id;
      max_numeric = std::max(max_numeric, id);
    }
  }
  KernelId next_id = max_numeric + 1;
  for (const auto& name : appearance) {
    if (!ids.contains(name)) ids[name] = next_id++;
  }

  std::map<KernelId, KernelNode> nodes;
  for (const auto& name : appearance) {
    KernelNode n;
    n.id = ids[name];
    if (!detail::is_kernel_number(name)) n.name = name;
    nodes.emplace(n.id, std::move(n));
  }
  std::map<KernelId, std::pair<bool, bool>> has_weights;
  for (const auto& stmt : doc.statements) {
    const auto* ns = std::get_if<DotNodeStmt>(&stmt);
    if (!ns) continue;
    auto& n = nodes.at(ids.at(ns->id));
    const auto where = "node " + ns->id;
    for (const auto& [key, value] : ns->attrs) {
      if (key == "kind") {
        n.kind = value;
      } else if (key == "size") {
        n.size = detail::require_number<int>(value, key, where);
      } else if (key == "weight_cpu") {
        n.weight_cpu = detail::require_number<double>(value, key, where);
        has_weights[n.id].first = true;
      } else if (key == "weight_gpu") {
        n.weight_gpu = detail::require_number<double>(value, key, where);
        has_weights[n.id].second = true;
      } else if (key == "label") {
        n.name = value;
      } else if (!detail::is_presentation_attr(key)) {
        auto it = std::find_if(n.extra.begin(), n.extra.end(),
                               [&](const auto& kv) { return kv.first == key; });
        if (it != n.extra.end()) {
          it->second = value;
        } else {
          n.extra.emplace_back(key, value);
        }
      }
    }
  }
  for (auto& [id, n] : nodes) {
    const auto w = has_weights[id];
    n.weighted = n.is_source() || (w.first && w.second);
  }

  std::vector<DataEdge> edges;
  for (const auto& stmt : doc.statements) {
    const auto* es = std::get_if<DotEdgeStmt>(&stmt);
    if (!es) continue;
    DataEdge e;
    e.src = ids.at(es->src);
    e.dst = ids.at(es->dst);
    const auto where = "edge " + es->src + "->" + es->dst;
    for (const auto& [key, value] : es->attrs) {
      if (key == "bytes") {
        e.bytes = detail::require_number<std::int64_t>(value, key, where);
      } else if (key == "weight_xfer") {
        e.weight_xfer = detail::require_number<double>(value, key, where);
        e.weighted = true;
      } else if (key == "items") {
        e.items = detail::require_number<int>(value, key, where);
      } else if (!detail::is_presentation_attr(key)) {
        e.extra.emplace_back(key, value);
      }
    }
    edges.push_back(std::move(e));
  }

  std::optional<KernelId> root;
  for (const auto& [id, n] : nodes) {
    if (n.is_source()) {
      root = id;
      break;
    }
  }
  if (!root) {
    KernelId id = 0;
    while (nodes.contains(id)) ++id;
    KernelNode r;
    r.id = id;
    r.kind = std::string(kernel_kind::kSource);
    r.weighted = true;
    nodes.emplace(id, std::move(r));
    root = id;
  }
  std::set<KernelId> has_input;
  for (const auto& e : edges) has_input.insert(e.dst);
  for (const auto& [id, n] : nodes) {
    if (id != *root && !has_input.contains(id)) {
      edges.push_back(DataEdge{*root, id, 0, 0.0, 1, false, {}});
    }
  }

  std::vector<KernelNode> node_list;
  for (auto& [id, n] : nodes) node_list.push_back(std::move(n));
  return TaskGraph(std::move(node_list), std::move(edges));
}

inline TaskGraph parse_dot(std::string_view text) { return to_task_graph(parse_dot_document(text)); }

/// Canonical document: nodes by id, then edges by (src, dst).
inline DotDocument to_dot_document(const TaskGraph& g, std::string name = "taskgraph") {
  DotDocument doc;
  doc.name = std::move(name);
  for (const auto& n : g.nodes()) {
    DotNodeStmt s{std::to_string(n.id), {}};
    if (!n.name.empty()) s.attrs.emplace_back("label", n.name);
    if (!n.kind.empty()) s.attrs.emplace_back("kind", n.kind);
    if (n.size != 0) s.attrs.emplace_back("size", std::to_string(n.size));
    if (n.weighted) {
      s.attrs.emplace_back("weight_cpu", detail::format_double(n.weight_cpu));
      s.attrs.emplace_back("weight_gpu", detail::format_double(n.weight_gpu));
    }
    s.attrs.insert(s.attrs.end(), n.extra.begin(), n.extra.end());
    doc.statements.emplace_back(std::move(s));
  }
  for (const auto& e : g.edges()) {
    DotEdgeStmt s{std::to_string(e.src), std::to_string(e.dst), {}};
    if (e.bytes != 0) s.attrs.emplace_back("bytes", std::to_string(e.bytes));
    if (e.items != 1) s.attrs.emplace_back("items", std::to_string(e.items));
    if (e.weighted) s.attrs.emplace_back("weight_xfer", detail::format_double(e.weight_xfer));
    s.attrs.insert(s.attrs.end(), e.extra.begin(), e.extra.end());
    doc.statements.emplace_back(std::move(s));
  }
  return doc;
}

inline std::string write_dot(const DotDocument& doc) {
  std::ostringstream os;
  auto attrs = [&os](const Attributes& a) {
    if (a.empty()) return;
    os << " [";
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (i) os << ", ";
      os << detail::quote_id(a[i].first) << '=' << detail::quote_id(a[i].second);
    }
    os << ']';
  };
  os << "digraph " << detail::quote_id(doc.name.empty() ? "taskgraph" : doc.name) << " {\n";
  for (const auto& stmt : doc.statements) {
    os << "  ";
    if (const auto* n = std::get_if<DotNodeStmt>(&stmt)) {
      os << detail::quote_id(n->id);
      attrs(n->attrs);
    } else {
      const auto& e = std::get<DotEdgeStmt>(stmt);
      os << detail::quote_id(e.src) << " -> " << detail::quote_id(e.dst);
      attrs(e.attrs);
    }
    os << ";\n";
  }
  os << "}\n";
  return os.str();
}

inline std::string emit_dot(const TaskGraph& g) { return write_dot(to_dot_document(g)); }

/// Fill colours used when rendering processor groups.
inline constexpr std::string_view group_colour(Device d) {
  return d == Device::kCpu ? "lightblue" : "palegreen";
}

/// emit_dot plus a `part` attribute and fill colour per kernel; edges whose
/// endpoints sit in different groups are drawn dashed red.
inline std::string emit_partitioned_dot(const TaskGraph& g,
                                        const std::map<KernelId, Device>& assignment) {
  for (auto id : g.kernel_ids()) {
    if (!assignment.contains(id)) {
      throw std::invalid_argument("partition does not cover kernel " + std::to_string(id));
    }
  }
  auto doc = to_dot_document(g);
  std::size_t edge_index = 0;
  for (auto& stmt : doc.statements) {
    if (auto* n = std::get_if<DotNodeStmt>(&stmt)) {
      const auto id = *detail::parse_int<KernelId>(n->id);
      if (g.is_root(id)) continue;
      const auto d = assignment.at(id);
      n->attrs.emplace_back("part", std::string(to_string(d)));
      n->attrs.emplace_back("style", "filled");
      n->attrs.emplace_back("fillcolor", std::string(group_colour(d)));
    } else {
      auto& s = std::get<DotEdgeStmt>(stmt);
      const auto& e = g.edges()[edge_index++];
      if (g.is_root(e.src)) continue;
      if (assignment.at(e.src) != assignment.at(e.dst)) {
        s.attrs.emplace_back("style", "dashed");
        s.attrs.emplace_back("color", "red");
      }
    }
  }
  return write_dot(doc);
}

}  // namespace hetsched
