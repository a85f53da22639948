#pragma once

// Line-oriented circuit text format:
//
//   inputs 3 outputs 1
//   n0 = AND x0 !x1
//   n1 = NAND n0 x2
//   out0 = n1
//
// Operands are x<i>, !x<i>, n<id>, const0 or const1. Blank lines and lines
// starting with '#' are ignored.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "als/circuit.hpp"
#include "als/error.hpp"

namespace als {

inline std::string ref_to_string(NodeRef r) {
  switch (r.kind()) {
    case NodeRef::Kind::Const0: return "const0";
    case NodeRef::Kind::Const1: return "const1";
    case NodeRef::Kind::Input: return (r.negated() ? "!x" : "x") + std::to_string(r.index());
    case NodeRef::Kind::Gate: return "n" + std::to_string(r.index());
  }
  return {};
}

inline std::string write_circuit(const Circuit& c) {
  std::ostringstream os;
  os << "inputs " << c.num_inputs() << " outputs " << c.num_outputs() << '\n';
  for (std::size_t i = 0; i < c.num_nodes(); ++i) {
    const auto& n = c.nodes()[i];
    os << 'n' << i << " = " << to_string(n.kind) << ' ' << ref_to_string(n.left) << ' ' << ref_to_string(n.right)
       << '\n';
  }
  for (unsigned j = 0; j < c.num_outputs(); ++j) os << "out" << j << " = " << ref_to_string(c.output(j)) << '\n';
  return os.str();
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t j = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (j < i) out.push_back(s.substr(j, i - j));
  }
  return out;
}

inline bool parse_uint(std::string_view s, std::uint32_t& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace detail

inline Circuit parse_circuit(std::string_view text) {
  std::optional<Circuit> c;
  std::unordered_map<std::uint32_t, NodeRef> names;
  std::vector<bool> output_set;
  std::size_t line_no = 0;
  std::size_t pos = 0;

  auto parse_ref = [&](std::string_view tok, std::size_t line) -> NodeRef {
    std::uint32_t idx = 0;
    if (tok == "const0") return NodeRef::constant(false);
    if (tok == "const1") return NodeRef::constant(true);
    if (tok.size() > 2 && tok.substr(0, 2) == "!x" && detail::parse_uint(tok.substr(2), idx)) {
      if (idx >= c->num_inputs()) throw ParseError("input !x" + std::to_string(idx) + " out of range", line);
      return NodeRef::input(idx, true);
    }
    if (tok.size() > 1 && tok[0] == 'x' && detail::parse_uint(tok.substr(1), idx)) {
      if (idx >= c->num_inputs()) throw ParseError("input x" + std::to_string(idx) + " out of range", line);
      return NodeRef::input(idx, false);
    }
    if (tok.size() > 1 && tok[0] == 'n' && detail::parse_uint(tok.substr(1), idx)) {
      auto it = names.find(idx);
      if (it == names.end()) throw ParseError("node n" + std::to_string(idx) + " used before definition", line);
      return it->second;
    }
    throw ParseError("bad operand '" + std::string(tok) + "'", line);
  };

  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    const std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    const auto t = detail::split_ws(line);
    if (t.empty() || t[0].front() == '#') continue;

    if (!c) {
      std::uint32_t ni = 0, no = 0;
      if (t.size() != 4 || t[0] != "inputs" || t[2] != "outputs" || !detail::parse_uint(t[1], ni) ||
          !detail::parse_uint(t[3], no))
        throw ParseError("expected header 'inputs N outputs M'", line_no);
      try {
        c.emplace(ni, no);
      } catch (const ContractError& e) {
        throw ParseError(e.what(), line_no);
      }
      output_set.assign(no, false);
      continue;
    }

    if (t.size() >= 2 && t[1] != "=") throw ParseError("expected '='", line_no);
    std::uint32_t idx = 0;
    if (t.size() == 5 && t[0].size() > 1 && t[0][0] == 'n' && detail::parse_uint(t[0].substr(1), idx)) {
      GateKind kind;
      if (t[2] == "AND")
        kind = GateKind::And;
      else if (t[2] == "NAND")
        kind = GateKind::Nand;
      else
        throw ParseError("unknown gate '" + std::string(t[2]) + "'", line_no);
      if (names.contains(idx)) throw ParseError("node n" + std::to_string(idx) + " redefined", line_no);
      const NodeRef a = parse_ref(t[3], line_no);
      const NodeRef b = parse_ref(t[4], line_no);
      names.emplace(idx, c->add_gate(kind, a, b));
    } else if (t.size() == 3 && t[0].size() > 3 && t[0].substr(0, 3) == "out" &&
               detail::parse_uint(t[0].substr(3), idx)) {
      if (idx >= c->num_outputs()) throw ParseError("output out" + std::to_string(idx) + " out of range", line_no);
      if (output_set[idx]) throw ParseError("output out" + std::to_string(idx) + " assigned twice", line_no);
      c->set_output(idx, parse_ref(t[2], line_no));
      output_set[idx] = true;
    } else {
      throw ParseError("unrecognized declaration", line_no);
    }
  }
  if (!c) throw ParseError("missing header", line_no);
  for (std::size_t j = 0; j < output_set.size(); ++j)
    if (!output_set[j]) throw ParseError("output out" + std::to_string(j) + " never assigned", line_no);
  return std::move(*c);
}

inline Circuit parse_circuit_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open circuit file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_circuit(ss.str());
}

inline void write_circuit_file(const std::string& path, const Circuit& c) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write circuit file '" + path + "'");
  out << write_circuit(c);
}

}  // namespace als
