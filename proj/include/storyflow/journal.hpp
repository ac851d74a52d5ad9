#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "storyflow/error.hpp"

namespace storyflow {

enum class JournalSource { Engine, Script, Gadget };

inline const char* to_string(JournalSource s) {
  switch (s) {
    case JournalSource::Engine: return "engine";
    case JournalSource::Script: return "script";
    case JournalSource::Gadget: return "gadget";
  }
  return "engine";
}

struct JournalEntry {
  std::int64_t t = 0;
  std::string id;
  JournalSource src = JournalSource::Engine;

  friend bool operator==(const JournalEntry&, const JournalEntry&) = default;
};

/// One JSONL record with keys in the fixed order t, id, src.
inline std::string journal_line(const JournalEntry& e) {
  nlohmann::json id = e.id;
  return "{\"t\":" + std::to_string(e.t) +
         ",\"id\":" + id.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) +
         ",\"src\":\"" + to_string(e.src) + "\"}";
}

inline JournalEntry parse_journal_line(std::string_view line) {
  try {
    auto j = nlohmann::json::parse(line);
    JournalEntry e;
    e.t = j.at("t").get<std::int64_t>();
    e.id = j.at("id").get<std::string>();
    std::string src = j.at("src").get<std::string>();
    if (src == "engine") e.src = JournalSource::Engine;
    else if (src == "script") e.src = JournalSource::Script;
    else if (src == "gadget") e.src = JournalSource::Gadget;
    else throw Error("MalformedJournal", "unknown journal source '" + src + "'");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error("MalformedJournal", std::string("bad journal line: ") + ex.what());
  }
}

inline std::vector<JournalEntry> read_journal(std::istream& in) {
  std::vector<JournalEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_journal_line(line));
  }
  return out;
}

/// Writes one record per line (LF). Returns the number of lines written.
inline std::size_t export_journal(const std::vector<JournalEntry>& entries, std::ostream& sink) {
  for (const auto& e : entries) sink << journal_line(e) << '\n';
  sink.flush();
  if (!sink) throw Error("SinkWriteFailed", "could not write the journal");
  return entries.size();
}

inline std::string journal_text(const std::vector<JournalEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += journal_line(e);
    out += '\n';
  }
  return out;
}

}  // namespace storyflow
