#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "storyflow/player.hpp"
#include "storyflow/service.hpp"

namespace storyflow {

// Exit codes beyond the halt reasons.
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitSuspended = 6;

namespace cli {

struct RunArgs {
  std::string course_dir;
  std::string policy;
  bool interactive = false;
  std::uint64_t seed = 0;
  std::string journal;
  std::size_t max_steps = 10'000;
  std::string suspend_store;
  bool resume = false;
  std::size_t suspend_after = 0;
};

inline void print_view(const PresenterView& v, std::ostream& out) {
  out << "== " << v.path.str() << " [" << v.presenter_type << "/" << v.kind << "]\n";
  std::string text = v.prompt.empty() ? trim(v.payload) : v.prompt;
  if (!text.empty()) out << text << "\n";
  for (std::size_t i = 0; i < v.options.size(); ++i) {
    out << "  " << (i + 1) << ") " << v.options[i].id << ": " << v.options[i].label << "\n";
  }
}

inline void print_halt(const Session& s, std::ostream& out) {
  out << "halted: " << to_string(s.halt_reason());
  if (!s.halt_detail().empty()) out << " (" << s.halt_detail() << ")";
  out << "\n";
}

inline void write_journal_file(const Session& s, const std::string& file) {
  std::ofstream sink(file, std::ios::binary | std::ios::trunc);
  if (!sink) throw Error("SinkWriteFailed", "cannot open " + file);
  export_journal(s.journal(), sink);
}

inline std::vector<std::string> words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

// Returns an exit code when the console asks to stop, nullopt otherwise.
inline std::optional<int> console_command(Player& player, const std::string& line,
                                          const RunArgs& args, std::ostream& out) {
  Session& s = player.session();
  auto w = words(line);
  const std::string& cmd = w[0];
  if (cmd == ":where") {
    if (s.current_view()) out << s.current_view()->path.str() << "\n";
    else print_halt(s, out);
  } else if (cmd == ":global") {
    if (w.size() < 2) out << "usage: :global <key>\n";
    else out << to_display(s.globals().get(w[1])) << "\n";
  } else if (cmd == ":mode") {
    if (w.size() == 1) {
      out << s.pending_mode().str() << "\n";
    } else {
      std::optional<std::string> target;
      if (w.size() > 2) target = w[2];
      s.set_mode(parse_mode(w[1], target));
      out << "mode " << s.pending_mode().str() << "\n";
    }
  } else if (cmd == ":journal") {
    std::size_t n = 10;
    if (w.size() > 1) n = std::stoul(w[1]);
    const auto& j = s.journal();
    for (std::size_t i = j.size() > n ? j.size() - n : 0; i < j.size(); ++i) out << journal_line(j[i]) << "\n";
  } else if (cmd == ":tick") {
    if (w.size() < 2) out << "usage: :tick <ms>\n";
    else s.tick(std::stoll(w[1]));
  } else if (cmd == ":interrupt") {
    std::optional<CoursePath> target;
    if (w.size() > 1) target = parse_path(w[1]);
    s.interrupt(target);
  } else if (cmd == ":suspend") {
    if (args.suspend_store.empty()) {
      out << "no --suspend-store given\n";
    } else {
      DirectoryLms lms(args.suspend_store);
      player.suspend(lms);
      out << "suspended to " << args.suspend_store << "\n";
      return kExitSuspended;
    }
  } else if (cmd == ":quit") {
    return 0;
  } else {
    out << "commands: :where :global <key> :mode [NAME [target]] :journal [n] :tick <ms> "
           ":interrupt [path] :suspend :quit\n";
  }
  return std::nullopt;
}

inline std::optional<Value> parse_answer(const PresenterView& v, const std::string& line,
                                         std::ostream& out) {
  if (v.kind == "choice" && !v.options.empty()) {
    std::string pick = trim(line);
    for (std::size_t i = 0; i < v.options.size(); ++i) {
      if (v.options[i].id == pick || std::to_string(i + 1) == pick) return Value(v.options[i].id);
    }
    out << "pick one of the listed options\n";
    return std::nullopt;
  }
  if (v.kind == "input" || v.kind == "choice") return Value(line);
  return Value{};
}

inline int interactive_loop(Player& player, const RunArgs& args, std::istream& in, std::ostream& out) {
  Session& s = player.session();
  std::string line;
  std::optional<std::size_t> shown;  // step count of the scene last printed
  while (s.status() == SessionStatus::AwaitingScene) {
    PresenterView v = *s.current_view();
    if (shown != s.step_count()) print_view(v, out);
    shown = s.step_count();
    out << "> " << std::flush;
    if (!std::getline(in, line)) return 0;
    try {
      if (!line.empty() && line[0] == ':') {
        if (auto code = console_command(player, line, args, out)) return *code;
        continue;
      }
      if (auto answer = parse_answer(v, line, out)) s.complete_scene(*answer);
    } catch (const Error& e) {
      out << "error [" << e.code() << "] " << e.what() << "\n";
    } catch (const std::exception& e) {
      out << "error " << e.what() << "\n";
    }
  }
  return exit_code_for(s.halt_reason());
}

inline int run(const RunArgs& args, std::istream& in, std::ostream& out, std::ostream& err) {
  if (!args.policy.empty() && args.interactive) {
    err << "--policy and --interactive exclude each other\n";
    return kExitUsage;
  }
  if (args.resume && args.suspend_store.empty()) {
    err << "--resume needs --suspend-store\n";
    return kExitUsage;
  }
  std::shared_ptr<const CourseBundle> bundle;
  try {
    bundle = std::make_shared<const CourseBundle>(load_course_dir(args.course_dir));
  } catch (const Error& e) {
    err << e.what() << "\n";
    return e.code() == "CourseNotFound" ? kExitUsage : kExitInvalid;
  }
  if (count_errors(bundle->diagnostics) > 0) {
    for (const auto& d : bundle->diagnostics) err << format_diagnostic(d) << "\n";
    return kExitInvalid;
  }

  std::unique_ptr<LearnerPolicy> policy;
  if (!args.policy.empty()) {
    std::ifstream pin(args.policy, std::ios::binary);
    if (!pin) {
      err << "cannot read policy " << args.policy << "\n";
      return kExitUsage;
    }
    std::ostringstream text;
    text << pin.rdbuf();
    try {
      policy = std::make_unique<LearnerPolicy>(text.str());
    } catch (const Error& e) {
      err << "policy: [" << e.code() << "] " << e.what() << "\n";
      return 5;
    }
  }

  PlayerOptions opts;
  opts.seed = args.seed;
  opts.max_steps = args.max_steps;
  opts.log_sink = [&out](const std::string& msg) { out << "[log] " << msg << "\n"; };
  Player player(bundle, opts);

  int code = 0;
  try {
    if (args.resume) {
      DirectoryLms lms(args.suspend_store);
      player.resume(lms);
    } else {
      player.start();
    }
    Session& s = player.session();
    if (policy) {
      std::size_t budget = args.suspend_after > 0 ? args.suspend_after : 100'000;
      drive_with_policy(s, *policy, budget);
      if (s.status() == SessionStatus::AwaitingScene && args.suspend_after > 0 && !args.suspend_store.empty()) {
        DirectoryLms lms(args.suspend_store);
        player.suspend(lms);
        out << "suspended at " << s.current_view()->path.str() << "\n";
        code = kExitSuspended;
      } else if (s.status() == SessionStatus::AwaitingScene) {
        err << "policy stopped answering at " << s.current_view()->path.str() << "\n";
        code = 5;
      }
    } else {
      code = interactive_loop(player, args, in, out);
    }
    if (s.status() == SessionStatus::Halted) {
      print_halt(s, out);
      code = exit_code_for(s.halt_reason());
      if (!args.suspend_store.empty()) {
        DirectoryLms lms(args.suspend_store);
        player.suspend(lms);
      }
    }
  } catch (const Error& e) {
    err << "[" << e.code() << "] " << e.what() << "\n";
    code = 5;
  }

  if (!args.journal.empty()) {
    try {
      write_journal_file(player.session(), args.journal);
    } catch (const Error& e) {
      err << "[" << e.code() << "] " << e.what() << "\n";
      return 5;
    }
  }
  return code;
}

inline int validate(const std::string& path, std::ostream& out, std::ostream& err) {
  std::vector<Diagnostic> diags;
  std::filesystem::path p(path);
  try {
    if (std::filesystem::is_directory(p)) {
      diags = load_course_dir(p).diagnostics;
    } else {
      std::ifstream in(p, std::ios::binary);
      if (!in) {
        err << "cannot read " << path << "\n";
        return kExitUsage;
      }
      std::ostringstream text;
      text << in.rdbuf();
      ParsedBody parsed = parse_course_document(text.str());
      diags = parsed.warnings;
      auto found = validate_course(parsed.body);
      diags.insert(diags.end(), found.begin(), found.end());
    }
  } catch (const Error& e) {
    if (e.code() == "CourseNotFound") {
      err << e.what() << "\n";
      return kExitUsage;
    }
    diags.push_back({Severity::Error, CoursePath::root(), e.what(), e.code()});
  }
  for (const auto& d : diags) out << format_diagnostic(d) << "\n";
  std::size_t errors = count_errors(diags);
  err << errors << " error(s), " << diags.size() - errors << " warning(s)\n";
  return errors == 0 ? 0 : kExitInvalid;
}

inline int serve(const std::string& addr, const std::string& courses, std::ostream& out,
                 std::ostream& err) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos) {
    err << "--addr must be host:port\n";
    return kExitUsage;
  }
  std::string host = addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    err << "bad port in --addr\n";
    return kExitUsage;
  }
  if (!std::filesystem::is_directory(courses)) {
    err << "no course directory " << courses << "\n";
    return kExitUsage;
  }
  SessionService service(courses);
  httplib::Server server;
  service.mount(server);
  out << "serving " << courses << " on " << addr << std::endl;
  if (!server.listen(host, port)) {
    err << "cannot listen on " << addr << "\n";
    return 5;
  }
  return 0;
}

}  // namespace cli

/// Entry point behind the `storyflow` executable. Streams are parameters so
/// tests can drive it in-process.
inline int cli_main(int argc, const char* const* argv, std::istream& in, std::ostream& out,
                    std::ostream& err) {
  CLI::App app{"storyflow: run, validate and serve flow-driven courses"};
  app.require_subcommand(1);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a course directory or course.xml");
  validate->add_option("path", validate_path, "course directory or file")->required();

  cli::RunArgs run_args;
  auto* run = app.add_subcommand("run", "play a course");
  run->add_option("course", run_args.course_dir, "course directory")->required();
  run->add_option("--policy", run_args.policy, "learner policy script for headless runs");
  run->add_flag("--interactive", run_args.interactive, "answer scenes from standard input");
  run->add_option("--seed", run_args.seed, "PRNG seed");
  run->add_option("--journal", run_args.journal, "write the journal (JSONL) here");
  run->add_option("--max-steps", run_args.max_steps, "element execution limit")->check(CLI::PositiveNumber);
  run->add_option("--suspend-store", run_args.suspend_store, "directory used as LMS store");
  run->add_flag("--resume", run_args.resume, "continue from the suspend store");
  run->add_option("--suspend-after", run_args.suspend_after,
                  "with --policy: suspend after this many policy actions");

  std::string addr = "127.0.0.1:8080";
  std::string courses;
  auto* serve = app.add_subcommand("serve", "host the HTTP session API");
  serve->add_option("--addr", addr, "host:port");
  serve->add_option("--courses", courses, "directory holding course directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitUsage;
  }

  if (*validate) return cli::validate(validate_path, out, err);
  if (*run) return cli::run(run_args, in, out, err);
  return cli::serve(addr, courses, out, err);
}

}  // namespace storyflow
