#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "storyflow/player.hpp"

namespace storyflow {

struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

inline Value json_to_value(const nlohmann::json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null: return {};
    case nlohmann::json::value_t::boolean: return j.get<bool>();
    case nlohmann::json::value_t::number_integer:
    case nlohmann::json::value_t::number_unsigned:
    case nlohmann::json::value_t::number_float: return j.get<double>();
    case nlohmann::json::value_t::string: return j.get<std::string>();
    case nlohmann::json::value_t::array: {
      List items;
      for (const auto& e : j) items.push_back(json_to_value(e));
      return Value::list(std::move(items));
    }
    case nlohmann::json::value_t::object: {
      Map m;
      for (const auto& [k, v] : j.items()) m[k] = json_to_value(v);
      return Value::map(std::move(m));
    }
    default: throw Error("BadRequest", "unsupported JSON value");
  }
}

inline nlohmann::json view_json(const Session& s) {
  nlohmann::json out;
  out["status"] = to_string(s.status());
  out["clock"] = s.clock();
  if (auto v = s.current_view()) {
    out["path"] = v->path.str();
    out["presenterType"] = v->presenter_type;
    out["kind"] = v->kind;
    out["payload"] = v->payload;
    out["prompt"] = v->prompt;
    nlohmann::json opts = nlohmann::json::array();
    for (const auto& o : v->options) opts.push_back({{"id", o.id}, {"label", o.label}});
    out["options"] = std::move(opts);
  }
  if (s.status() == SessionStatus::Halted) {
    out["haltReason"] = to_string(s.halt_reason());
    if (!s.halt_detail().empty()) out["haltDetail"] = s.halt_detail();
  }
  return out;
}

inline int http_status_for(const std::string& code) {
  static const std::map<std::string, int> table = {
      {"CourseNotFound", 404},   {"UnknownSession", 404},   {"PathNotFound", 404},
      {"NotFound", 404},         {"NotAwaitingScene", 409}, {"TargetNotActive", 409},
      {"NotSuspendable", 409},   {"HashMismatch", 409},     {"CyclicData", 409},
      {"CommitFailed", 500},
  };
  auto it = table.find(code);
  return it == table.end() ? 400 : it->second;
}

/// Hosts engine sessions for the course directories below one root and
/// answers the session API. Calls on one session are serialized; different
/// sessions run independently.
class SessionService {
public:
  explicit SessionService(std::filesystem::path courses_dir, PlayerOptions defaults = {})
      : courses_dir_(std::move(courses_dir)), defaults_(std::move(defaults)) {}

  HttpReply handle(const std::string& method, const std::string& target, const std::string& body) {
    try {
      return route(method, target, body);
    } catch (const Error& e) {
      return error_reply(http_status_for(e.code()), e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
      return error_reply(400, "BadRequest", e.what());
    }
  }

  /// Routes every request under /sessions to handle().
  void mount(httplib::Server& server) {
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
      HttpReply r = handle(req.method, req.path, req.body);
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Get(R"(/sessions.*)", forward);
    server.Post(R"(/sessions.*)", forward);
    server.Options(R"(/sessions.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  }

  std::size_t session_count() {
    std::lock_guard lock(table_mu_);
    return sessions_.size();
  }

private:
  struct Hosted {
    std::mutex mu;
    std::unique_ptr<Player> player;
  };

  static HttpReply json_reply(int status, const nlohmann::json& j) {
    return {status, j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace)};
  }

  static HttpReply error_reply(int status, const std::string& code, const std::string& message) {
    return json_reply(status, {{"error", code}, {"message", message}});
  }

  static nlohmann::json parse_body(const std::string& body, bool required) {
    if (body.empty()) {
      if (required) throw Error("BadRequest", "request body is required");
      return nlohmann::json::object();
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw Error("BadRequest", std::string("malformed JSON body: ") + e.what());
    }
    if (!j.is_object()) throw Error("BadRequest", "request body must be a JSON object");
    return j;
  }

  std::shared_ptr<const CourseBundle> course(const std::string& name) {
    if (!is_valid_id(name)) throw Error("CourseNotFound", "no course named '" + name + "'");
    std::lock_guard lock(table_mu_);
    if (auto it = courses_.find(name); it != courses_.end()) return it->second;
    std::filesystem::path dir = courses_dir_ / name;
    if (!std::filesystem::is_regular_file(dir / "course.xml")) {
      throw Error("CourseNotFound", "no course named '" + name + "'");
    }
    auto bundle = std::make_shared<const CourseBundle>(load_course_dir(dir));
    if (count_errors(bundle->diagnostics) > 0) {
      throw Error("InvalidCourse", "course '" + name + "' does not validate");
    }
    courses_[name] = bundle;
    return bundle;
  }

  std::shared_ptr<Hosted> find(const std::string& id) {
    std::lock_guard lock(table_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error("UnknownSession", "no session '" + id + "'");
    return it->second;
  }

  HttpReply create(const nlohmann::json& req) {
    auto hosted = std::make_shared<Hosted>();
    if (req.contains("resume")) {
      const auto& rec = req.at("resume");
      if (!rec.is_object() || !rec.contains("course") || !rec.at("course").is_string()) {
        throw Error("MalformedSnapshot", "resume record has no course name");
      }
      hosted->player = std::make_unique<Player>(course(rec.at("course").get<std::string>()), defaults_);
      hosted->player->resume(rec);
    } else {
      if (!req.contains("course") || !req.at("course").is_string()) {
        throw Error("BadRequest", "body needs a string 'course'");
      }
      PlayerOptions opts = defaults_;
      if (req.contains("seed")) {
        if (!req.at("seed").is_number_unsigned()) throw Error("BadRequest", "seed must be a non-negative integer");
        opts.seed = req.at("seed").get<std::uint64_t>();
      }
      hosted->player = std::make_unique<Player>(course(req.at("course").get<std::string>()), opts);
      hosted->player->start();
    }
    std::string id;
    {
      std::lock_guard lock(table_mu_);
      id = "s" + std::to_string(next_id_++);
      sessions_[id] = hosted;
    }
    nlohmann::json out = view_json(hosted->player->session());
    out["sessionId"] = id;
    return json_reply(201, out);
  }

  HttpReply route(const std::string& method, const std::string& target, const std::string& body) {
    std::vector<std::string> parts;
    std::size_t start = 1;
    while (start <= target.size()) {
      std::size_t slash = target.find('/', start);
      if (slash == std::string::npos) slash = target.size();
      if (slash > start) parts.push_back(target.substr(start, slash - start));
      start = slash + 1;
    }
    if (parts.empty() || parts[0] != "sessions") throw Error("NotFound", "no route " + target);

    if (parts.size() == 1) {
      if (method != "POST") throw Error("NotFound", "no route " + method + " " + target);
      return create(parse_body(body, true));
    }
    if (parts.size() != 3) throw Error("NotFound", "no route " + target);

    auto hosted = find(parts[1]);
    std::lock_guard lock(hosted->mu);
    Player& player = *hosted->player;
    Session& s = player.session();
    const std::string& verb = parts[2];

    if (method == "GET" && verb == "current") return json_reply(200, view_json(s));
    if (method == "GET" && verb == "journal") {
      return {200, journal_text(s.journal()), "application/x-ndjson"};
    }
    if (method != "POST") throw Error("NotFound", "no route " + method + " " + target);

    if (verb == "complete") {
      auto req = parse_body(body, true);
      if (!req.contains("result")) throw Error("BadRequest", "body needs 'result'");
      s.complete_scene(json_to_value(req.at("result")));
      return json_reply(200, view_json(s));
    }
    if (verb == "interrupt") {
      auto req = parse_body(body, false);
      std::optional<CoursePath> where;
      if (req.contains("target") && !req.at("target").is_null()) {
        where = parse_path(req.at("target").get<std::string>());
      }
      s.interrupt(where);
      return json_reply(200, view_json(s));
    }
    if (verb == "tick") {
      auto req = parse_body(body, true);
      if (!req.contains("ms") || !req.at("ms").is_number_integer()) {
        throw Error("BadRequest", "body needs an integer 'ms'");
      }
      s.tick(req.at("ms").get<std::int64_t>());
      return json_reply(200, view_json(s));
    }
    if (verb == "suspend") {
      return json_reply(200, {{"record", player.record()}});
    }
    throw Error("NotFound", "no route " + method + " " + target);
  }

  std::filesystem::path courses_dir_;
  PlayerOptions defaults_;
  std::mutex table_mu_;
  std::map<std::string, std::shared_ptr<const CourseBundle>> courses_;
  std::map<std::string, std::shared_ptr<Hosted>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace storyflow
