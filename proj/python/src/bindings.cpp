// JSON crosses the boundary as text; the Python package decodes it.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "promptprog/analytics.hpp"
#include "promptprog/cli.hpp"
#include "promptprog/code_blocks.hpp"
#include "promptprog/config.hpp"
#include "promptprog/corpus.hpp"
#include "promptprog/error.hpp"
#include "promptprog/grader.hpp"
#include "promptprog/platform.hpp"
#include "promptprog/session.hpp"

namespace py = pybind11;
using namespace promptprog;
using nlohmann::json;

namespace {

const corpus::Problem& find_problem(const std::vector<corpus::Problem>& problems, const std::string& id) {
  for (const auto& p : problems) {
    if (p.id == id) return p;
  }
  throw Error(ErrorCode::UnknownProblem, "no problem '" + id + "'");
}

std::string grade(const std::filesystem::path& corpus_dir, const std::string& problem_id, const std::string& code,
                  const std::string& mode, double per_test_timeout_s) {
  const auto parsed = runner::parse_grading_mode(mode);
  if (!parsed) throw Error(ErrorCode::InvalidArgument, "unknown grading mode '" + mode + "'");
  const auto problems = corpus::load_corpus(corpus_dir);
  runner::SandboxPolicy policy;
  policy.per_test_timeout_s = per_test_timeout_s;
  runner::SandboxGrader grader(policy, runner::Toolchain{}, *parsed);
  const auto& problem = find_problem(problems, problem_id);
  py::gil_scoped_release release;
  return runner::to_json(grader.grade(problem, runner::CodeBlock{code, std::nullopt, {}})).dump();
}

std::string analyze(const std::filesystem::path& log_path, const std::string& report, const std::string& format,
                    const std::optional<std::string>& problem, int top_edges, const std::vector<int>& buckets) {
  cli::AnalyzeOptions opts;
  opts.log_path = log_path;
  const auto r = cli::parse_report(report);
  if (!r) throw Error(ErrorCode::InvalidArgument, "unknown report '" + report + "'");
  opts.report = *r;
  if (!format.empty()) {
    opts.format = cli::parse_format(format);
    if (!opts.format) throw Error(ErrorCode::InvalidArgument, "unknown format '" + format + "'");
  }
  opts.problem = problem;
  opts.top_edges = top_edges;
  opts.buckets = buckets;
  std::ostringstream err;
  return cli::render_report(opts, err);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  // Raised as PromptProgError(code, message).
  static py::exception<Error> error(m, "PromptProgError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetObject(error.ptr(), py::make_tuple(std::string(to_string(e.code())), e.what()).ptr());
    }
  });

  m.def("load_corpus", [](const std::filesystem::path& dir) {
    json out = json::array();
    for (const auto& p : corpus::load_corpus(dir)) out.push_back(corpus::to_json(p));
    return out.dump();
  });
  m.def("render_specification", [](const std::filesystem::path& dir, const std::string& id) {
    return corpus::render_specification(find_problem(corpus::load_corpus(dir), id));
  });
  m.def("extract_code_blocks", [](const std::string& content) {
    std::vector<std::string> out;
    for (const auto& b : runner::extract_code_blocks(content)) out.push_back(b.text);
    return out;
  });
  m.def("char_length", [](const std::string& text) { return dialogue::char_length(text); });
  m.def("grade", &grade, py::arg("corpus_dir"), py::arg("problem_id"), py::arg("code"),
        py::arg("mode") = "single_driver", py::arg("per_test_timeout_s") = 2.0);
  m.def("analyze", &analyze, py::arg("log_path"), py::arg("report"), py::arg("format") = "",
        py::arg("problem") = std::nullopt, py::arg("top_edges") = 15,
        py::arg("buckets") = std::vector<int>{1, 2, 3, 4, 5});

  py::class_<service::Platform>(m, "Platform")
      .def(py::init([](const std::filesystem::path& config_path) {
             return service::build_platform(service::load_config(config_path));
           }),
           py::arg("config_path"))
      .def("start_session", &service::Platform::start_session, py::arg("student_id"), py::arg("problem_id"),
           py::call_guard<py::gil_scoped_release>())
      .def(
          "post_message",
          [](service::Platform& p, const std::string& sid, const std::string& content) {
            py::gil_scoped_release release;
            const auto r = p.post_message(sid, content);
            return json{{"assistant_content", r.assistant.content},
                        {"code_block_count", r.assistant.code_blocks.size()},
                        {"limit", {{"used", r.used}, {"max", r.max}}}}
                .dump();
          },
          py::arg("session_id"), py::arg("content"))
      .def(
          "run_code",
          [](service::Platform& p, const std::string& sid, const std::optional<std::string>& key) {
            py::gil_scoped_release release;
            return p.run_code(sid, key).dump();
          },
          py::arg("session_id"), py::arg("idempotency_key") = std::nullopt)
      .def("reset_conversation", &service::Platform::reset_conversation, py::arg("session_id"),
           py::arg("idempotency_key") = std::nullopt, py::call_guard<py::gil_scoped_release>())
      .def(
          "session",
          [](service::Platform& p, const std::string& sid) { return dialogue::session_summary(p.session(sid)).dump(); },
          py::arg("session_id"))
      .def("drain", &service::Platform::drain, py::call_guard<py::gil_scoped_release>());
}
