#include "promptprog/analytics.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "promptprog/error.hpp"
#include "promptprog/session.hpp"

namespace promptprog::analytics {

using corpus::Tier;
using nlohmann::json;

namespace {

constexpr Tier kTiers[] = {Tier::L7, Tier::L9, Tier::L10};

State sorted_union(const State& a, const State& b) {
  State out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

json fraction(std::size_t num, std::size_t den) {
  if (den == 0) return nullptr;
  return static_cast<double>(num) / static_cast<double>(den);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

std::string csv_cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  }
  return v.dump();
}

}  // namespace

TraceSet reconstruct_traces(const std::vector<events::EventRecord>& log) {
  TraceSet out;
  auto replayed = dialogue::replay_sessions(log);
  out.warnings = std::move(replayed.warnings);
  for (auto& [id, s] : replayed.sessions) {
    StudentProblemTrace t;
    t.session_id = s.session_id;
    t.student_id = s.student_id;
    t.problem_id = s.problem_id;
    t.tier = s.tier;
    t.functions = s.functions;
    std::sort(t.functions.begin(), t.functions.end());
    t.solved = s.solved;
    for (const auto& c : s.conversations) {
      ConversationTrace ct;
      ct.index = c.index;
      for (const auto& m : c.messages) {
        if (m.role == dialogue::Role::Student) ct.student_messages.push_back({m.position, m.char_length});
      }
      std::map<runner::MessageRef, CodeEvent> by_ref;
      for (const auto& r : c.shadow) {
        if (by_ref.count(r.ref)) continue;  // a block is graded once; keep the first grade
        by_ref[r.ref] = CodeEvent{r.ref, r.all_ok, c.executed.count(r.ref) > 0, r.correct_functions};
      }
      for (const auto& ref : c.executed) {
        if (!by_ref.count(ref)) {
          out.warnings.push_back(
              {0, fmt::format("OrphanEvent: session {} ran block ({},{},{}) with no shadow grade", id,
                              ref.conversation, ref.position, ref.block)});
        }
      }
      State cumulative;
      for (auto& [ref, ev] : by_ref) {
        cumulative = sorted_union(cumulative, ev.correct_functions);
        if (!ct.solved_at_message && !t.functions.empty() && cumulative == t.functions) {
          ct.solved_at_message = ref.position;
        }
        ct.code_events.push_back(std::move(ev));
      }
      t.conversations.push_back(std::move(ct));
    }
    out.traces.push_back(std::move(t));
  }
  std::sort(out.traces.begin(), out.traces.end(), [](const auto& a, const auto& b) {
    return std::tie(a.problem_id, a.student_id, a.session_id) < std::tie(b.problem_id, b.student_id, b.session_id);
  });
  return out;
}

const ConversationTrace* first_successful_conversation(const StudentProblemTrace& trace) {
  for (const auto& c : trace.conversations) {
    if (c.solved_at_message) return &c;
  }
  return nullptr;
}

std::string state_label(const State& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += s[i];
  }
  return out + "}";
}

namespace {

ProgressionGraph progression(const std::vector<StudentProblemTrace>& traces, const std::string& problem_id,
                             const State& full) {
  ProgressionGraph g;
  g.problem_id = problem_id;
  for (const auto& t : traces) {
    if (t.problem_id != problem_id) continue;
    const auto* conv = first_successful_conversation(t);
    if (!conv) continue;
    ++g.student_count;
    std::set<std::pair<State, State>> seen;
    State s;
    for (const auto& ev : conv->code_events) {
      State next = sorted_union(s, ev.correct_functions);
      if (next.size() > s.size()) {
        if (seen.insert({s, next}).second) ++g.edges[{s, next}];
        s = std::move(next);
      }
    }
  }
  if (g.student_count > 0) {
    g.nodes.insert(State{});
    g.nodes.insert(full);
  }
  for (const auto& [edge, w] : g.edges) {
    g.nodes.insert(edge.first);
    g.nodes.insert(edge.second);
  }
  return g;
}

}  // namespace

ProgressionGraph build_progression_graph(const std::vector<StudentProblemTrace>& traces,
                                         const std::string& problem_id) {
  for (const auto& t : traces) {
    if (t.problem_id == problem_id) return progression(traces, problem_id, t.functions);
  }
  throw Error(ErrorCode::UnknownProblem, "no sessions for problem '" + problem_id + "'");
}

ProgressionGraph build_progression_graph(const std::vector<StudentProblemTrace>& traces,
                                         const corpus::Problem& problem) {
  State full = problem.function_names();
  std::sort(full.begin(), full.end());
  return progression(traces, problem.id, full);
}

ProgressionGraph filter_top_edges(const ProgressionGraph& g, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  std::vector<std::pair<std::pair<State, State>, int>> edges(g.edges.begin(), g.edges.end());
  if (static_cast<std::size_t>(k) >= edges.size()) return g;
  std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  ProgressionGraph out;
  out.problem_id = g.problem_id;
  out.student_count = g.student_count;
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
    out.edges.insert(edges[i]);
    out.nodes.insert(edges[i].first.first);
    out.nodes.insert(edges[i].first.second);
  }
  return out;
}

json graph_to_json(const ProgressionGraph& g) {
  json nodes = json::array();
  for (const auto& n : g.nodes) nodes.push_back(n);
  json edges = json::array();
  for (const auto& [e, w] : g.edges) edges.push_back({{"from", e.first}, {"to", e.second}, {"weight", w}});
  return {{"schema_version", kSchemaVersion},
          {"problem_id", g.problem_id},
          {"student_count", g.student_count},
          {"nodes", nodes},
          {"edges", edges}};
}

ProgressionGraph graph_from_json(const json& doc) {
  try {
    ProgressionGraph g;
    g.problem_id = doc.at("problem_id").get<std::string>();
    g.student_count = doc.at("student_count").get<int>();
    for (const auto& n : doc.at("nodes")) g.nodes.insert(n.get<State>());
    for (const auto& e : doc.at("edges")) {
      g.edges[{e.at("from").get<State>(), e.at("to").get<State>()}] = e.at("weight").get<int>();
    }
    return g;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad graph document: ") + ex.what());
  }
}

std::string export_graph(const ProgressionGraph& g, GraphFormat format) {
  if (format == GraphFormat::Structured) return graph_to_json(g).dump(2) + "\n";
  int lo = 0, hi = 0;
  for (const auto& [e, w] : g.edges) {
    lo = lo ? std::min(lo, w) : w;
    hi = std::max(hi, w);
  }
  std::string out = fmt::format("// schema_version={}\ndigraph progression {{\n", kSchemaVersion);
  out += fmt::format("  label=\"{} (students: {})\";\n  rankdir=LR;\n", g.problem_id, g.student_count);
  for (const auto& n : g.nodes) out += fmt::format("  \"{0}\" [label=\"{0}\"];\n", state_label(n));
  for (const auto& [e, w] : g.edges) {
    const double pen = hi == lo ? 3.0 : 1.0 + 4.0 * (w - lo) / static_cast<double>(hi - lo);
    out += fmt::format("  \"{}\" -> \"{}\" [label=\"{}\", penwidth={:.2f}];\n", state_label(e.first),
                       state_label(e.second), w, pen);
  }
  return out + "}\n";
}

json to_json(const MetricTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    json row = json::object();
    for (std::size_t i = 0; i < t.columns.size() && i < r.size(); ++i) row[t.columns[i]] = r[i];
    rows.push_back(std::move(row));
  }
  return {{"schema_version", kSchemaVersion}, {"table", t.name}, {"columns", t.columns}, {"rows", rows}};
}

std::string to_csv(const MetricTable& t) {
  std::string out = fmt::format("# schema_version={} table={}\n", kSchemaVersion, t.name);
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + csv_cell(r[i]);
    out += '\n';
  }
  return out;
}

MetricTable length_distribution(const std::vector<StudentProblemTrace>& traces, const std::vector<int>& edges) {
  if (edges.empty()) throw Error(ErrorCode::InvalidArgument, "bucket edges must not be empty");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i] < 1 || (i && edges[i] <= edges[i - 1])) {
      throw Error(ErrorCode::InvalidArgument, "bucket edges must be positive and strictly increasing");
    }
  }
  MetricTable t;
  t.name = "length_distribution";
  t.columns = {"tier", "solving_students", "empty"};
  int prev = 0;
  for (int e : edges) {
    t.columns.push_back(prev + 1 == e ? std::to_string(e) : fmt::format("{}-{}", prev + 1, e));
    prev = e;
  }
  t.columns.push_back(fmt::format(">{}", edges.back()));

  for (Tier tier : kTiers) {
    std::vector<std::size_t> counts(edges.size() + 1, 0);
    std::size_t n = 0;
    for (const auto& tr : traces) {
      if (tr.tier != tier) continue;
      const auto* c = first_successful_conversation(tr);
      if (!c) continue;
      ++n;
      const int len = *c->solved_at_message;
      const auto it = std::lower_bound(edges.begin(), edges.end(), len);
      ++counts[static_cast<std::size_t>(it - edges.begin())];
    }
    std::vector<json> row{corpus::to_string(tier), n, n == 0};
    for (auto c : counts) row.push_back(n ? static_cast<double>(c) / static_cast<double>(n) : 0.0);
    t.rows.push_back(std::move(row));
  }
  return t;
}

MetricTable median_size_by_position(const std::vector<StudentProblemTrace>& traces) {
  MetricTable t;
  t.name = "median_size_by_position";
  t.columns = {"tier", "position", "students", "median_chars"};
  for (Tier tier : kTiers) {
    std::map<int, std::vector<double>> by_pos;
    for (const auto& tr : traces) {
      if (tr.tier != tier) continue;
      const auto* c = first_successful_conversation(tr);
      if (!c) continue;
      for (const auto& m : c->student_messages) {
        if (m.position <= *c->solved_at_message) by_pos[m.position].push_back(static_cast<double>(m.char_length));
      }
    }
    for (auto& [pos, lengths] : by_pos) {
      t.rows.push_back({corpus::to_string(tier), pos, lengths.size(), median(lengths)});
    }
  }
  return t;
}

MetricTable execution_selectivity(const std::vector<StudentProblemTrace>& traces) {
  MetricTable t;
  t.name = "execution_selectivity";
  t.columns = {"tier",          "code_events",    "executed",    "correct", "executed_correct",
               "wrong",         "executed_wrong", "overall",     "given_correct", "given_wrong"};
  for (Tier tier : kTiers) {
    std::size_t n = 0, e = 0, nc = 0, ec = 0;
    for (const auto& tr : traces) {
      if (tr.tier != tier) continue;
      for (const auto& c : tr.conversations) {
        for (const auto& ev : c.code_events) {
          ++n;
          e += ev.executed;
          nc += ev.correct;
          ec += ev.executed && ev.correct;
        }
      }
    }
    const std::size_t nw = n - nc, ew = e - ec;
    t.rows.push_back({corpus::to_string(tier), n, e, nc, ec, nw, ew, fraction(e, n), fraction(ec, nc),
                      fraction(ew, nw)});
  }
  return t;
}

int required_solves(Tier tier) noexcept { return tier == Tier::L7 ? 3 : 1; }

MetricTable descriptive_stats(const std::vector<StudentProblemTrace>& traces) {
  MetricTable t;
  t.name = "descriptive_stats";
  t.columns = {"tier",          "pairs",   "mean_conversations", "mean_messages",
               "pair_solve_rate", "students", "student_success_rate"};
  for (Tier tier : kTiers) {
    // A student may hold several sessions for one problem; they form one pair.
    std::map<std::pair<std::string, std::string>, std::pair<std::size_t, std::size_t>> pairs;
    std::map<std::pair<std::string, std::string>, bool> solved;
    for (const auto& tr : traces) {
      if (tr.tier != tier) continue;
      const auto key = std::make_pair(tr.student_id, tr.problem_id);
      for (const auto& c : tr.conversations) {
        if (c.student_messages.empty()) continue;
        auto& [convs, msgs] = pairs[key];
        ++convs;
        msgs += c.student_messages.size();
      }
      if (pairs.count(key)) solved[key] = solved[key] || tr.solved;
    }
    if (pairs.empty()) continue;
    double convs = 0, msgs = 0;
    std::size_t pair_solves = 0;
    std::map<std::string, int> solves_by_student;
    for (const auto& [key, cm] : pairs) {
      convs += static_cast<double>(cm.first);
      msgs += static_cast<double>(cm.second);
      solves_by_student[key.first] += solved[key] ? 1 : 0;
      pair_solves += solved[key];
    }
    std::size_t successes = 0;
    for (const auto& [student, k] : solves_by_student) successes += k >= required_solves(tier);
    const auto np = static_cast<double>(pairs.size());
    t.rows.push_back({corpus::to_string(tier), pairs.size(), convs / np, msgs / np, fraction(pair_solves, pairs.size()),
                      solves_by_student.size(), fraction(successes, solves_by_student.size())});
  }
  return t;
}

}  // namespace promptprog::analytics
