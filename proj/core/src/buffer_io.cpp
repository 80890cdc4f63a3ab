#include <charconv>
#include <fstream>
#include <sstream>

#include "grader/error.hpp"
#include "grader/replay_buffer.hpp"

namespace grader {

namespace {

constexpr const char* kFormatTag = "grader-buffer";

void append_number(std::string& out, double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  out.append(buf, res.ptr);
}

std::string join_values(std::span<const double> v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) out.push_back(' ');
    append_number(out, v[k]);
  }
  return out;
}

std::string encode_goal(const Goal& g) {
  std::string out;
  for (std::size_t t = 0; t < g.terms.size(); ++t) {
    if (t) out.push_back(';');
    out += std::to_string(g.terms[t].factor);
    out.push_back(':');
    out += join_values(g.terms[t].value);
    out.push_back(':');
    append_number(out, g.terms[t].tolerance);
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

struct LineContext {
  const std::string& file;
  long line;
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(file, line, what); }
};

double parse_number(const std::string& tok, const LineContext& ctx) {
  double x = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  while (first < last && *first == ' ') ++first;
  auto res = std::from_chars(first, last, x);
  if (res.ec != std::errc() || res.ptr != last) ctx.fail("bad number '" + tok + "'");
  return x;
}

std::vector<double> parse_values(const std::string& cell, const LineContext& ctx) {
  std::vector<double> v;
  if (cell.empty()) return v;
  for (const auto& tok : split(cell, ' ')) {
    if (!tok.empty()) v.push_back(parse_number(tok, ctx));
  }
  return v;
}

Goal decode_goal(const std::string& cell, const LineContext& ctx) {
  Goal g;
  if (cell.empty()) return g;
  for (const auto& term : split(cell, ';')) {
    const auto parts = split(term, ':');
    if (parts.size() != 3) ctx.fail("bad goal term '" + term + "'");
    GoalTerm t;
    t.factor = static_cast<int>(parse_number(parts[0], ctx));
    t.value = parse_values(parts[1], ctx);
    t.tolerance = parse_number(parts[2], ctx);
    g.terms.push_back(std::move(t));
  }
  return g;
}

template <class V>
V read_factors(const std::vector<std::string>& cells, std::size_t& col, const FactorLayout& layout,
               const LineContext& ctx) {
  std::vector<double> values;
  values.reserve(layout.width());
  for (int i = 0; i < layout.size(); ++i) {
    auto v = parse_values(cells[col++], ctx);
    if (static_cast<int>(v.size()) != layout[i].width()) {
      ctx.fail("factor '" + layout[i].name + "' expects " + std::to_string(layout[i].width()) + " values");
    }
    values.insert(values.end(), v.begin(), v.end());
  }
  return V(std::move(values));
}

}  // namespace

void write_buffer_csv(std::ostream& out, const ReplayBuffer& buffer) {
  const auto& sp = buffer.spaces();
  nlohmann::json header{{"format", kFormatTag}, {"version", 1}, {"capacity", buffer.capacity()},
                        {"spaces", sp}};
  out << header.dump() << '\n';
  std::string cols = "trajectory_id";
  for (const auto& s : sp.state.spaces()) cols += ",s." + s.name;
  for (const auto& s : sp.action.spaces()) cols += ",a." + s.name;
  for (const auto& s : sp.state.spaces()) cols += ",next." + s.name;
  cols += ",goal,reward,terminal";
  out << cols << '\n';
  std::string row;
  for (const auto& smp : buffer) {
    row.clear();
    row += std::to_string(smp.trajectory_id);
    for (int i = 0; i < sp.state.size(); ++i) row += "," + join_values(sp.state.view(smp.state.span(), i));
    for (int i = 0; i < sp.action.size(); ++i) row += "," + join_values(sp.action.view(smp.action.span(), i));
    for (int i = 0; i < sp.state.size(); ++i) row += "," + join_values(sp.state.view(smp.next_state.span(), i));
    row += "," + encode_goal(smp.goal);
    row += smp.reward == 1.0 ? ",1" : ",0";
    row += smp.terminal ? ",1" : ",0";
    out << row << '\n';
  }
}

void save_buffer_csv(const std::string& path, const ReplayBuffer& buffer) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_buffer_csv(out, buffer);
}

ReplayBuffer read_buffer_csv(std::istream& in, const std::string& name) {
  std::string line;
  long lineno = 1;
  if (!std::getline(in, line)) throw ParseError(name, lineno, "missing JSON header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(name, lineno, std::string("header is not JSON: ") + e.what());
  }
  if (header.value("format", "") != kFormatTag) throw ParseError(name, lineno, "not a replay-buffer file");
  ReplayBuffer buffer(header.at("spaces").get<MdpSpaces>(), header.at("capacity").get<std::size_t>());
  const auto& sp = buffer.spaces();
  const std::size_t ncols = 1 + 2 * sp.state.size() + sp.action.size() + 3;

  ++lineno;
  if (!std::getline(in, line)) throw ParseError(name, lineno, "missing column header");
  if (split(line, ',').size() != ncols) throw ParseError(name, lineno, "column header has wrong arity");

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    LineContext ctx{name, lineno};
    const auto cells = split(line, ',');
    if (cells.size() != ncols) ctx.fail("expected " + std::to_string(ncols) + " columns");
    TransitionSample s;
    std::size_t col = 0;
    s.trajectory_id = static_cast<std::int64_t>(parse_number(cells[col++], ctx));
    s.state = read_factors<FactoredState>(cells, col, sp.state, ctx);
    s.action = read_factors<FactoredAction>(cells, col, sp.action, ctx);
    s.next_state = read_factors<FactoredState>(cells, col, sp.state, ctx);
    s.goal = decode_goal(cells[col++], ctx);
    s.reward = parse_number(cells[col++], ctx);
    s.terminal = parse_number(cells[col++], ctx) != 0.0;
    try {
      buffer.push(std::move(s));
    } catch (const Error& e) {
      ctx.fail(e.what());
    }
  }
  return buffer;
}

ReplayBuffer load_buffer_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open buffer file '" + path + "'");
  return read_buffer_csv(in, path);
}

}  // namespace grader
