#pragma once

#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "storyflow/course_dir.hpp"
#include "storyflow/engine.hpp"
#include "storyflow/journal.hpp"
#include "storyflow/lms.hpp"
#include "storyflow/policy.hpp"

namespace storyflow {

struct PlayerOptions {
  std::uint64_t seed = 0;
  std::size_t max_steps = 10'000;
  bool journal_enabled = true;
  std::function<void(const std::string&)> log_sink;
};

/// A session on a loaded course directory with the shipped gadgets
/// registered. Adds course identity to suspend records and talks to the LMS.
class Player {
public:
  Player(std::shared_ptr<const CourseBundle> course, PlayerOptions opts = {})
      : course_(std::move(course)), source_(course_->dir), session_(course_->root, source_, config(*course_, opts)) {
    session_.register_gadget(std::make_unique<TimerGadget>());
  }

  Session& session() { return session_; }
  const Session& session() const { return session_; }
  const CourseBundle& course() const { return *course_; }

  void start() { session_.start(); }

  /// Full suspend record: engine state, course identity and the journal up
  /// to the record's checkpoint.
  nlohmann::json record() const {
    nlohmann::json rec = session_.suspend_record();
    rec["course"] = course_->name;
    rec["contentHash"] = course_->content_hash;
    nlohmann::json lines = nlohmann::json::array();
    std::size_t n = rec.at("journalLength").get<std::size_t>();
    for (std::size_t i = 0; i < n; ++i) lines.push_back(journal_line(session_.journal()[i]));
    rec["journal"] = std::move(lines);
    return rec;
  }

  nlohmann::json suspend(LmsAdapter& lms) const {
    nlohmann::json rec = record();
    lms.set("suspend", rec.dump());
    lms.set("journal", journal_text(session_.journal()));
    if (!lms.commit()) throw Error("CommitFailed", "LMS refused the suspend record");
    return rec;
  }

  /// Writes the journal as it stands. Used when a session halts.
  void flush_journal(LmsAdapter& lms) const {
    lms.set("journal", journal_text(session_.journal()));
    if (!lms.commit()) throw Error("CommitFailed", "LMS refused the journal");
  }

  void resume(const nlohmann::json& rec) {
    if (!rec.is_object() || !rec.contains("contentHash") || !rec.contains("journal")) {
      throw Error("MalformedSnapshot", "suspend record lacks course identity or journal");
    }
    if (rec.at("contentHash") != course_->content_hash) {
      throw Error("HashMismatch", "course content changed since the session was suspended");
    }
    std::vector<JournalEntry> prior;
    try {
      for (const auto& line : rec.at("journal")) prior.push_back(parse_journal_line(line.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
      throw Error("MalformedSnapshot", std::string("bad journal in record: ") + e.what());
    } catch (const Error& e) {
      throw Error("MalformedSnapshot", e.what());
    }
    session_.resume_from(rec, prior);
  }

  void resume(LmsAdapter& lms) {
    auto text = lms.get("suspend");
    if (!text || text->empty()) throw Error("MalformedSnapshot", "the LMS holds no suspend record");
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(*text);
    } catch (const nlohmann::json::exception& e) {
      throw Error("MalformedSnapshot", std::string("unreadable suspend record: ") + e.what());
    }
    resume(rec);
  }

private:
  static SessionConfig config(const CourseBundle& course, const PlayerOptions& opts) {
    SessionConfig c;
    c.seed = opts.seed;
    c.step_limit = opts.max_steps;
    c.journal_enabled = opts.journal_enabled;
    c.presenters = course.presenters.resolver();
    c.log_sink = opts.log_sink;
    return c;
  }

  std::shared_ptr<const CourseBundle> course_;
  DirectorySource source_;
  Session session_;
};

/// Answers scenes with `policy` until the session stops awaiting input or
/// `max_actions` answers and ticks were spent. Returns the number spent.
inline std::size_t drive_with_policy(Session& s, LearnerPolicy& policy,
                                     std::size_t max_actions = 100'000) {
  std::size_t spent = 0;
  while (s.status() == SessionStatus::AwaitingScene && spent < max_actions) {
    PresenterView view = *s.current_view();
    std::size_t steps = s.step_count();
    if (std::int64_t ms = policy.ticks(view, s.globals()); ms > 0) {
      s.tick(ms);
      ++spent;
      if (s.status() != SessionStatus::AwaitingScene || s.step_count() != steps) continue;
      if (spent >= max_actions) break;
    }
    s.complete_scene(policy.answer(view, s.globals()));
    ++spent;
  }
  return spent;
}

/// CLI exit code for a halt reason.
inline int exit_code_for(HaltReason r) {
  switch (r) {
    case HaltReason::Finished: return 0;
    case HaltReason::CourseExhausted: return 3;
    case HaltReason::StepLimit: return 4;
    case HaltReason::Error: return 5;
    case HaltReason::None: return 0;
  }
  return 5;
}

}  // namespace storyflow
