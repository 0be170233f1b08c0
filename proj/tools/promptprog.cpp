#include <iostream>

#include <CLI11.hpp>

#include "promptprog/cli.hpp"
#include "promptprog/error.hpp"

using namespace promptprog;

int main(int argc, char** argv) {
  CLI::App app{"Prompt-programming exercise platform"};
  app.require_subcommand(1);

  std::string config_path;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--config", config_path, "Service config file")->required();

  cli::ValidateOptions validate_opts;
  std::string solutions_dir;
  auto* validate = app.add_subcommand("validate", "Check a corpus directory");
  validate->add_option("dir", validate_opts.corpus_dir, "Corpus directory")->required();
  validate->add_flag("--check-solutions", validate_opts.check_solutions, "Grade each reference solution");
  validate->add_option("--solutions", solutions_dir, "Reference solutions (default <dir>/solutions)");

  cli::AnalyzeOptions analyze_opts;
  std::string report, format, buckets, out_path, problem;
  auto* analyze = app.add_subcommand("analyze", "Compute a report from an event log");
  analyze->add_option("log", analyze_opts.log_path, "Event log")->required();
  analyze->add_option("--report", report, "progression|lengths|sizes|selectivity|descriptive")->required();
  analyze->add_option("--problem", problem, "Problem id");
  analyze->add_option("--top-edges", analyze_opts.top_edges, "Edges kept in the progression graph")
      ->capture_default_str();
  analyze->add_option("--buckets", buckets, "Comma-separated bucket edges");
  analyze->add_option("--format", format, "structured|csv|dot");
  analyze->add_option("--out", out_path, "Output file (default stdout)");

  std::string script_path, replay_config, log_override;
  auto* replay = app.add_subcommand("replay", "Run a scripted session against the full stack");
  replay->add_option("script", script_path, "Replay script")->required();
  replay->add_option("--config", replay_config, "Service config file")->required();
  replay->add_option("--log", log_override, "Event log path overriding the config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (serve->parsed()) return cli::cmd_serve(config_path, std::cerr);

    if (validate->parsed()) {
      if (!solutions_dir.empty()) validate_opts.solutions_dir = solutions_dir;
      return cli::cmd_validate(validate_opts, std::cout, std::cerr);
    }

    if (analyze->parsed()) {
      auto r = cli::parse_report(report);
      if (!r) throw Error(ErrorCode::InvalidArgument, "unknown report '" + report + "'");
      analyze_opts.report = *r;
      if (!format.empty()) {
        analyze_opts.format = cli::parse_format(format);
        if (!analyze_opts.format) throw Error(ErrorCode::InvalidArgument, "unknown format '" + format + "'");
      }
      if (!buckets.empty()) analyze_opts.buckets = cli::parse_bucket_list(buckets);
      if (!problem.empty()) analyze_opts.problem = problem;
      if (!out_path.empty()) analyze_opts.out_path = out_path;
      return cli::cmd_analyze(analyze_opts, std::cout, std::cerr);
    }

    auto config = service::load_config(replay_config);
    if (!log_override.empty()) config.log_path = std::filesystem::absolute(log_override);
    return cli::run_replay(cli::load_replay_script(script_path), config, std::cout, std::cerr);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  }
}
