#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "storyflow/content.hpp"
#include "storyflow/flow_model.hpp"
#include "storyflow/interpreter.hpp"
#include "storyflow/journal.hpp"
#include "storyflow/snapshot.hpp"
#include "storyflow/xml.hpp"

namespace storyflow {

// ---------------------------------------------------------------------------
// Modes, status, views
// ---------------------------------------------------------------------------

enum class ModeKind { Regular, Stay, Upstream, Canal };

struct ExecutionMode {
  ModeKind kind = ModeKind::Regular;
  CoursePath target;  // CANAL only

  static ExecutionMode regular() { return {}; }
  static ExecutionMode stay() { return {ModeKind::Stay, {}}; }
  static ExecutionMode upstream() { return {ModeKind::Upstream, {}}; }
  static ExecutionMode canal(CoursePath p) { return {ModeKind::Canal, std::move(p)}; }

  std::string name() const {
    switch (kind) {
      case ModeKind::Regular: return "REGULAR";
      case ModeKind::Stay: return "STAY";
      case ModeKind::Upstream: return "UPSTREAM";
      case ModeKind::Canal: return "CANAL";
    }
    return "REGULAR";
  }
  std::string str() const { return kind == ModeKind::Canal ? name() + " " + target.str() : name(); }

  friend bool operator==(const ExecutionMode&, const ExecutionMode&) = default;
};

/// Accepts REGULAR, STAY, UPSTREAM and CANAL (case-insensitive, optional
/// `_MODE` suffix). CANAL requires a target path.
inline ExecutionMode parse_mode(std::string name, const std::optional<std::string>& target) {
  for (auto& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (name.size() > 5 && name.ends_with("_MODE")) name.resize(name.size() - 5);
  if (name == "REGULAR") return ExecutionMode::regular();
  if (name == "STAY") return ExecutionMode::stay();
  if (name == "UPSTREAM") return ExecutionMode::upstream();
  if (name == "CANAL") {
    if (!target) throw Error("MissingTarget", "CANAL mode needs a target path");
    return ExecutionMode::canal(parse_path(*target));
  }
  throw Error("InvalidMode", "unknown execution mode '" + name + "'");
}

enum class SessionStatus { Running, AwaitingScene, Halted };
enum class HaltReason { None, Finished, CourseExhausted, StepLimit, Error };

inline const char* to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Running: return "Running";
    case SessionStatus::AwaitingScene: return "AwaitingScene";
    case SessionStatus::Halted: return "Halted";
  }
  return "?";
}

inline const char* to_string(HaltReason r) {
  switch (r) {
    case HaltReason::None: return "None";
    case HaltReason::Finished: return "Finished";
    case HaltReason::CourseExhausted: return "CourseExhausted";
    case HaltReason::StepLimit: return "StepLimit";
    case HaltReason::Error: return "Error";
  }
  return "?";
}

inline HaltReason parse_halt_reason(const std::string& s) {
  for (auto r : {HaltReason::None, HaltReason::Finished, HaltReason::CourseExhausted,
                 HaltReason::StepLimit, HaltReason::Error}) {
    if (s == to_string(r)) return r;
  }
  throw Error("MalformedSnapshot", "unknown halt reason '" + s + "'");
}

struct PresenterOption {
  std::string id;
  std::string label;
  friend bool operator==(const PresenterOption&, const PresenterOption&) = default;
};

struct PresenterView {
  CoursePath path;
  std::string presenter_type;
  std::string kind;  // message | choice | input
  std::string payload;
  std::optional<std::string> record_to;
  std::string prompt;
  std::vector<PresenterOption> options;
};

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// Pulls `<prompt>` and `<option id=..>` children out of a scene payload.
/// Payloads that are not well-formed XML simply yield no prompt or options.
inline void read_scene_payload(const std::string& payload, std::string& prompt,
                               std::vector<PresenterOption>& options) {
  try {
    xml::Element wrapper = xml::parse("<payload>" + payload + "</payload>");
    for (const auto& child : wrapper.children) {
      if (child.name == "prompt") {
        prompt = trim(xml::deep_text(child));
      } else if (child.name == "option") {
        const std::string* id = child.attribute("id");
        options.push_back({id ? *id : trim(xml::deep_text(child)), trim(xml::deep_text(child))});
      }
    }
  } catch (const Error&) {
  }
}

/// Value form of an XML element, as returned by the loadXml() builtin:
/// {name, attrs, children, text}.
inline Value xml_to_value(const xml::Element& el) {
  Map attrs;
  for (const auto& [k, v] : el.attributes) attrs[k] = Value(v);
  List children;
  for (const auto& c : el.children) children.push_back(xml_to_value(c));
  Map m;
  m["name"] = Value(el.name);
  m["attrs"] = Value::map(std::move(attrs));
  m["children"] = Value::list(std::move(children));
  m["text"] = Value(trim(el.text));
  return Value::map(std::move(m));
}

// ---------------------------------------------------------------------------
// Gadgets
// ---------------------------------------------------------------------------

/// Service handle handed to gadget callbacks. Requests are queued and applied
/// once all callbacks of the current dispatch have returned.
class GadgetContext {
public:
  virtual ~GadgetContext() = default;
  virtual GlobalSpace& global() = 0;
  virtual std::int64_t now() const = 0;
  virtual void journal(std::string id) = 0;
  virtual void interrupt(std::optional<CoursePath> target = std::nullopt) = 0;
  virtual void set_mode(ExecutionMode mode) = 0;
  virtual void finish() = 0;
};

class Gadget {
public:
  virtual ~Gadget() = default;
  virtual std::string name() const = 0;
  virtual void on_session_start(GadgetContext&) {}
  virtual void on_execute(GadgetContext&, const CoursePath&, const StoryElementSpec&) {}
  virtual void on_complete(GadgetContext&, const CoursePath&) {}
  virtual void on_interrupt(GadgetContext&, const CoursePath&) {}
  virtual void on_tick(GadgetContext&, std::int64_t /*now*/) {}
};

/// Interrupts a scene once more than Global["timer.limitMs"] virtual
/// milliseconds have passed since it started.
class TimerGadget : public Gadget {
public:
  std::string name() const override { return "timer"; }

  void on_execute(GadgetContext& ctx, const CoursePath& path, const StoryElementSpec& spec) override {
    if (spec.kind != ElementKind::Scene) return;
    Value limit = ctx.global().get("timer.limitMs");
    if (limit.is_null()) return;
    if (!limit.is_number()) throw Error("TypeError", "timer.limitMs must be a number");
    armed_ = Armed{path, ctx.now(), static_cast<std::int64_t>(limit.as_number())};
    ctx.global().set("timer.expired", false);
  }

  void on_complete(GadgetContext&, const CoursePath& path) override { disarm(path); }
  void on_interrupt(GadgetContext&, const CoursePath& path) override { disarm(path); }

  void on_tick(GadgetContext& ctx, std::int64_t now) override {
    if (!armed_ || now - armed_->started <= armed_->limit) return;
    ctx.interrupt(armed_->path);
    ctx.global().set("timer.expired", true);
    armed_.reset();
  }

  bool armed() const { return armed_.has_value(); }

private:
  struct Armed {
    CoursePath path;
    std::int64_t started;
    std::int64_t limit;
  };

  void disarm(const CoursePath& path) {
    if (armed_ && armed_->path == path) armed_.reset();
  }

  std::optional<Armed> armed_;
};

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

using PresenterResolver = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> builtin_presenter_kind(const std::string& type) {
  if (type == "message" || type == "choice" || type == "input" || type == "auto") return type;
  return std::nullopt;
}

struct SessionConfig {
  std::uint64_t seed = 0;
  std::size_t step_limit = 10'000;
  bool journal_enabled = true;
  PresenterResolver presenters = builtin_presenter_kind;
  std::function<void(const std::string&)> log_sink;
  InterpreterLimits script_limits;
};

/// One running course. Drives the StoryElement tree under the execution
/// modes, suspends on scenes and services gadget and script requests.
///
/// Not thread-safe; callers serialize access per session.
class Session {
public:
  Session(std::shared_ptr<const StoryElementSpec> root, ContentSource& source,
          SessionConfig config = {})
      : root_(std::move(root)),
        source_(source),
        config_(std::move(config)),
        interp_(globals_, host_, config_.script_limits),
        rng_(config_.seed),
        gadget_ctx_(*this) {
    install_builtins();
  }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  void register_gadget(std::unique_ptr<Gadget> gadget) {
    if (started_) throw Error("SessionStarted", "gadgets must be registered before start");
    for (const auto& g : gadgets_) {
      if (g->name() == gadget->name()) {
        throw Error("DuplicateGadgetName", "gadget '" + gadget->name() + "' already registered");
      }
    }
    gadgets_.push_back(std::move(gadget));
  }

  void start() {
    begin();
    frames_.push_back(Frame{CoursePath::root(), *root_, 0});
    status_ = SessionStatus::Running;
    guarded([&] {
      schedule_preloads(CoursePath::root(), *root_, source_, cache_, overrides_, &warnings_);
      for (auto& g : gadgets_) g->on_session_start(gadget_ctx_);
      if (settle()) next_ = ScanForward{0};
    });
    run();
  }

  void complete_scene(const Value& result) {
    if (status_ != SessionStatus::AwaitingScene) {
      throw Error("NotAwaitingScene", std::string("session is ") + to_string(status_));
    }
    status_ = SessionStatus::Running;
    guarded([&] { finish_leaf(result); });
    run();
  }

  /// Interrupts the open scene, or an ancestor Stream of it, from outside.
  void interrupt(std::optional<CoursePath> target = std::nullopt) {
    if (status_ != SessionStatus::AwaitingScene) {
      throw Error("NotAwaitingScene", std::string("session is ") + to_string(status_));
    }
    check_interrupt_target(target);
    guarded([&] {
      interrupt_now(target);
      settle();
    });
    run();
  }

  void set_mode(ExecutionMode mode) { pending_ = std::move(mode); }

  void tick(std::int64_t ms) {
    if (ms <= 0) throw Error("InvalidTick", "tick needs a positive number of milliseconds");
    clock_ += ms;
    if (!started_ || status_ == SessionStatus::Halted) return;
    guarded([&] {
      for (auto& g : gadgets_) g->on_tick(gadget_ctx_, clock_);
      settle();
    });
    run();
  }

  std::optional<PresenterView> current_view() const {
    if (status_ != SessionStatus::AwaitingScene || !leaf_) return std::nullopt;
    PresenterView v;
    v.path = leaf_->path;
    v.presenter_type = leaf_->spec.presenter_type.value_or("");
    v.kind = config_.presenters(v.presenter_type).value_or("");
    v.payload = leaf_->spec.payload;
    v.record_to = leaf_->spec.record_to;
    read_scene_payload(v.payload, v.prompt, v.options);
    return v;
  }

  // --- state inspection ----------------------------------------------------

  SessionStatus status() const { return status_; }
  HaltReason halt_reason() const { return halt_reason_; }
  const std::string& halt_detail() const { return halt_detail_; }
  const ExecutionMode& pending_mode() const { return pending_; }
  std::int64_t clock() const { return clock_; }
  std::size_t step_count() const { return step_count_; }
  const std::optional<CoursePath>& current_path() const { return current_path_; }
  const std::vector<JournalEntry>& journal() const { return journal_; }
  const std::vector<Diagnostic>& warnings() const { return warnings_; }
  const std::vector<std::string>& log_lines() const { return log_lines_; }
  GlobalSpace& globals() { return globals_; }
  const GlobalSpace& globals() const { return globals_; }
  const OverrideTable& overrides() const { return overrides_; }
  std::map<std::string, int> load_stats() const { return storyflow::load_stats(cache_); }
  const ContentSource& source() const { return source_; }

  /// Active chain from the outermost Stream down to the open leaf.
  std::vector<CoursePath> active_chain() const {
    std::vector<CoursePath> out;
    for (std::size_t k = 1; k < frames_.size(); ++k) out.push_back(frames_[k].path);
    if (leaf_) out.push_back(leaf_->path);
    return out;
  }

  std::string rng_state() const {
    std::ostringstream os;
    os << rng_;
    return os.str();
  }

  /// Next value of the session PRNG in [0, 1).
  double next_random() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  // --- suspend / resume ----------------------------------------------------

  /// Engine part of a suspend record. Awaiting sessions are captured as they
  /// were when the open scene started; halted sessions as they are now.
  nlohmann::json suspend_record() const {
    nlohmann::json rec;
    if (status_ == SessionStatus::Halted) {
      auto snap = snapshot_global(globals_);
      rec["status"] = "halted";
      rec["haltReason"] = to_string(halt_reason_);
      rec["haltDetail"] = halt_detail_;
      rec["path"] = current_path_ ? current_path_->str() : "";
      rec["globals"] = snap.document;
      rec["skipped"] = snap.skipped;
      rec["mode"] = pending_.name();
      rec["clock"] = clock_;
      rec["rng"] = rng_state();
      rec["journalLength"] = journal_.size();
      rec["stepCount"] = step_count_;
      rec["passFromStart"] = pass_from_start_;
      rec["leavesInPass"] = leaves_in_pass_;
      rec["overrides"] = overrides_json(overrides_);
      return rec;
    }
    if (status_ != SessionStatus::AwaitingScene || !checkpoint_) {
      throw Error("NotSuspendable", std::string("cannot suspend a session that is ") +
                                        to_string(status_));
    }
    const Checkpoint& c = *checkpoint_;
    if (!c.snapshot_error.empty()) throw Error("CyclicData", c.snapshot_error);
    rec["status"] = "awaiting";
    rec["haltReason"] = "None";
    rec["haltDetail"] = "";
    rec["path"] = c.path.str();
    rec["globals"] = c.globals;
    rec["skipped"] = c.skipped;
    rec["mode"] = "REGULAR";
    rec["clock"] = c.clock;
    rec["rng"] = c.rng;
    rec["journalLength"] = c.journal_length;
    rec["stepCount"] = c.step_count;
    rec["passFromStart"] = c.pass_from_start;
    rec["leavesInPass"] = c.leaves_in_pass;
    rec["overrides"] = c.overrides;
    return rec;
  }

  /// Starts this session from a suspend record instead of from the top.
  /// `prior` is the journal saved alongside the record.
  void resume_from(const nlohmann::json& rec, const std::vector<JournalEntry>& prior) {
    begin();
    try {
      resume_impl(rec, prior);
    } catch (const nlohmann::json::exception& e) {
      throw Error("MalformedSnapshot", std::string("bad suspend record: ") + e.what());
    }
  }

private:
  // --- internal state ------------------------------------------------------

  struct Frame {
    CoursePath path;
    StoryElementSpec spec;  // resolved stream body
    std::size_t index = 0;  // child currently active
  };

  struct Leaf {
    CoursePath path;
    StoryElementSpec spec;
  };

  struct Checkpoint {
    CoursePath path;
    nlohmann::json globals;
    std::vector<std::string> skipped;
    std::string snapshot_error;
    std::int64_t clock = 0;
    std::string rng;
    std::size_t journal_length = 0;
    std::size_t step_count = 0;
    bool pass_from_start = false;
    std::size_t leaves_in_pass = 0;
    nlohmann::json overrides;
  };

  struct Request {
    enum class Kind { Journal, SetMode, SetContent, Finish, Interrupt } kind;
    std::string text;
    JournalSource src = JournalSource::Script;
    std::optional<CoursePath> target;
    ExecutionMode mode;
  };

  // Engine operations; the run loop executes one at a time.
  struct ScanForward { std::size_t from; };
  struct ScanBackward { std::ptrdiff_t from; };
  struct Decide { std::size_t index; };
  struct Execute {
    std::size_t index;
    std::optional<CoursePath> navigate_to;
  };
  struct Navigate { CoursePath target; };
  struct CompleteStream {
    enum class Then { Decide, Backward, Navigate } then;
    CoursePath target;
  };
  using Op = std::variant<ScanForward, ScanBackward, Decide, Execute, Navigate, CompleteStream>;

  class Context : public GadgetContext {
  public:
    explicit Context(Session& s) : s_(s) {}
    GlobalSpace& global() override { return s_.globals_; }
    std::int64_t now() const override { return s_.clock_; }
    void journal(std::string id) override {
      s_.queue_.push_back({Request::Kind::Journal, std::move(id), JournalSource::Gadget, {}, {}});
    }
    void interrupt(std::optional<CoursePath> target) override {
      s_.queue_.push_back({Request::Kind::Interrupt, {}, JournalSource::Gadget, std::move(target), {}});
    }
    void set_mode(ExecutionMode mode) override {
      s_.queue_.push_back({Request::Kind::SetMode, {}, JournalSource::Gadget, {}, std::move(mode)});
    }
    void finish() override {
      s_.queue_.push_back({Request::Kind::Finish, {}, JournalSource::Gadget, {}, {}});
    }

  private:
    Session& s_;
  };

  // --- helpers ---------------------------------------------------------------

  void begin() {
    if (started_) throw Error("SessionStarted", "session already started");
    started_ = true;
  }

  Frame& top() { return frames_.back(); }

  void append(std::string id, JournalSource src) {
    if (quiet_ || !config_.journal_enabled) return;
    journal_.push_back({clock_, std::move(id), src});
  }

  void halt(HaltReason reason, std::string detail = {}) {
    if (status_ == SessionStatus::Halted) return;
    status_ = SessionStatus::Halted;
    halt_reason_ = reason;
    halt_detail_ = std::move(detail);
    next_.reset();
    divert_.reset();
    queue_.clear();
    append(std::string("halt:") + to_string(reason), JournalSource::Engine);
  }

  template <class F>
  void guarded(F&& f) {
    try {
      f();
    } catch (const Error& e) {
      halt(HaltReason::Error, e.code() + ": " + e.what());
    } catch (const std::exception& e) {
      halt(HaltReason::Error, std::string("InternalError: ") + e.what());
    }
  }

  void run() {
    while (status_ == SessionStatus::Running && next_) {
      Op op = std::move(*next_);
      next_.reset();
      guarded([&] { std::visit([&](auto& o) { step(o); }, op); });
    }
    if (status_ == SessionStatus::Running) halt(HaltReason::Error, "InternalError: engine stalled");
  }

  const ast::Program& program(const std::string& src) {
    auto it = programs_.find(src);
    if (it == programs_.end()) {
      it = programs_.emplace(src, std::make_shared<const ast::Program>(parse_program(src))).first;
    }
    return *it->second;
  }

  const ast::Expr& expression(const std::string& src) {
    auto it = expressions_.find(src);
    if (it == expressions_.end()) {
      it = expressions_.emplace(src, std::make_shared<const ast::Expr>(parse_expression(src))).first;
    }
    return *it->second;
  }

  void run_program(const std::string& src, const CoursePath& at, const char* what) {
    try {
      interp_.exec_program(program(src));
    } catch (const ScriptError& e) {
      throw Error(e.code(), std::string(what) + " of " + at.str() + ": " + e.what());
    }
  }

  bool includable(const StoryElementSpec& el, const CoursePath& at) {
    if (!el.include_if) return true;
    try {
      return truthy(interp_.eval_guard(expression(*el.include_if)));
    } catch (const ScriptError& e) {
      throw Error(e.code(), "includeIf of " + at.str() + ": " + e.what());
    }
  }

  /// Applies queued requests. Returns true when the current operation may go
  /// on, false when the session halted or an interrupt took over.
  bool settle() {
    drain();
    if (status_ == SessionStatus::Halted) return false;
    if (divert_) {
      next_ = std::move(divert_);
      divert_.reset();
      return false;
    }
    return true;
  }

  bool handler(const std::optional<std::string>& src, const CoursePath& at, const char* what) {
    if (src) run_program(*src, at, what);
    return settle();
  }

  template <class F>
  bool gadget_hook(F&& f) {
    if (!quiet_) {
      for (auto& g : gadgets_) f(*g);
    }
    return settle();
  }

  void drain() {
    if (draining_ || quiet_) {
      if (quiet_) queue_.clear();
      return;
    }
    draining_ = true;
    struct Reset {
      bool& flag;
      ~Reset() { flag = false; }
    } reset{draining_};
    while (!queue_.empty() && status_ != SessionStatus::Halted) {
      Request r = std::move(queue_.front());
      queue_.pop_front();
      switch (r.kind) {
        case Request::Kind::Journal: append(std::move(r.text), r.src); break;
        case Request::Kind::SetMode: pending_ = std::move(r.mode); break;
        case Request::Kind::SetContent: set_content(*r.target, std::move(r.text)); break;
        case Request::Kind::Finish: halt(HaltReason::Finished); break;
        case Request::Kind::Interrupt: interrupt_now(r.target); break;
      }
    }
  }

  // --- operations ------------------------------------------------------------

  void step(Decide& op) {
    ExecutionMode mode = std::move(pending_);
    pending_ = ExecutionMode::regular();
    switch (mode.kind) {
      case ModeKind::Regular: next_ = ScanForward{op.index + 1}; break;
      case ModeKind::Stay: {
        const auto& el = top().spec.children.at(op.index);
        if (includable(el, top().path.child(el.id))) {
          next_ = Execute{op.index, std::nullopt};
        } else {
          next_ = ScanForward{op.index + 1};
        }
        break;
      }
      case ModeKind::Upstream:
        next_ = ScanBackward{static_cast<std::ptrdiff_t>(op.index) - 1};
        break;
      case ModeKind::Canal: next_ = Navigate{std::move(mode.target)}; break;
    }
  }

  void step(ScanForward& op) {
    Frame& f = top();
    bool at_root = frames_.size() == 1;
    if (at_root && op.from == 0) {
      pass_from_start_ = true;
      leaves_in_pass_ = 0;
    }
    for (std::size_t k = op.from; k < f.spec.children.size(); ++k) {
      const auto& el = f.spec.children[k];
      if (includable(el, f.path.child(el.id))) {
        next_ = Execute{k, std::nullopt};
        return;
      }
    }
    if (!at_root) {
      next_ = CompleteStream{CompleteStream::Then::Decide, {}};
    } else if (pass_from_start_ && leaves_in_pass_ == 0) {
      halt(HaltReason::CourseExhausted);
    } else {
      next_ = ScanForward{0};
    }
  }

  void step(ScanBackward& op) {
    Frame& f = top();
    for (std::ptrdiff_t k = op.from; k >= 0; --k) {
      const auto& el = f.spec.children[static_cast<std::size_t>(k)];
      if (includable(el, f.path.child(el.id))) {
        next_ = Execute{static_cast<std::size_t>(k), std::nullopt};
        return;
      }
    }
    if (frames_.size() == 1) {
      next_ = ScanForward{0};
    } else {
      next_ = CompleteStream{CompleteStream::Then::Backward, {}};
    }
  }

  void step(Navigate& op) {
    pass_from_start_ = false;
    const Frame& f = top();
    bool strict_ancestor = f.path.is_root() || (f.path != op.target && f.path.is_prefix_of(op.target));
    if (!strict_ancestor) {
      next_ = CompleteStream{CompleteStream::Then::Navigate, op.target};
      return;
    }
    if (op.target.is_root()) {
      next_ = ScanForward{0};
      return;
    }
    const std::string& id = op.target.segments()[f.path.depth()];
    for (std::size_t k = 0; k < f.spec.children.size(); ++k) {
      const auto& el = f.spec.children[k];
      if (el.id != id) continue;
      bool last = f.path.depth() + 1 == op.target.depth();
      if (!last && el.kind != ElementKind::Stream) {
        throw Error("NotAStream", "cannot navigate through " + f.path.child(id).str());
      }
      next_ = Execute{k, last ? std::nullopt : std::optional<CoursePath>(op.target)};
      return;
    }
    throw Error("PathNotFound", "navigation target " + op.target.str() + " not found");
  }

  void step(CompleteStream& op) {
    Frame f = std::move(frames_.back());
    frames_.pop_back();
    append("complete:" + f.path.str(), JournalSource::Engine);
    if (!handler(f.spec.on_complete, f.path, "onComplete")) return;
    if (!gadget_hook([&](Gadget& g) { g.on_complete(gadget_ctx_, f.path); })) return;
    std::size_t index = top().index;
    switch (op.then) {
      case CompleteStream::Then::Decide: next_ = Decide{index}; break;
      case CompleteStream::Then::Backward:
        if (pending_.kind == ModeKind::Regular) {
          next_ = ScanBackward{static_cast<std::ptrdiff_t>(index) - 1};
        } else {
          next_ = Decide{index};
        }
        break;
      case CompleteStream::Then::Navigate: next_ = Navigate{op.target}; break;
    }
  }

  void step(Execute& op) {
    const StoryElementSpec declared = top().spec.children.at(op.index);
    CoursePath path = top().path.child(declared.id);
    if (step_count_ >= config_.step_limit) {
      halt(HaltReason::StepLimit);
      return;
    }
    if (declared.kind == ElementKind::Scene) take_checkpoint(path);
    ++step_count_;
    top().index = op.index;
    current_path_ = path;
    StoryElementSpec spec = resolve_content(path, declared, source_, cache_, overrides_, &warnings_);

    if (spec.kind == ElementKind::Stream) {
      schedule_preloads(path, spec, source_, cache_, overrides_, &warnings_);
      frames_.push_back(Frame{path, spec, 0});
    } else {
      leaf_ = Leaf{path, spec};
      ++leaves_in_pass_;
    }
    append("exec:" + path.str(), JournalSource::Engine);
    if (!handler(spec.on_execute, path, "onExecute")) return;
    if (!gadget_hook([&](Gadget& g) { g.on_execute(gadget_ctx_, path, spec); })) return;

    switch (spec.kind) {
      case ElementKind::Action:
        run_program(spec.script, path, "script");
        if (!settle()) return;
        finish_leaf(Value{});
        break;
      case ElementKind::Scene: {
        std::string type = spec.presenter_type.value_or("");
        auto kind = config_.presenters(type);
        if (!kind) {
          throw Error("UnknownPresenter", "no presenter registered for type '" + type + "' (" +
                                              path.str() + ")");
        }
        if (*kind == "auto") {
          finish_leaf(Value{});
        } else {
          status_ = SessionStatus::AwaitingScene;
        }
        break;
      }
      case ElementKind::Stream:
        if (op.navigate_to) {
          next_ = Navigate{*op.navigate_to};
        } else {
          next_ = ScanForward{0};
        }
        break;
    }
  }

  void finish_leaf(const Value& result) {
    Leaf leaf = std::move(*leaf_);
    leaf_.reset();
    if (leaf.spec.record_to) globals_.set(*leaf.spec.record_to, result);
    append("complete:" + leaf.path.str(), JournalSource::Engine);
    if (!handler(leaf.spec.on_complete, leaf.path, "onComplete")) return;
    if (!gadget_hook([&](Gadget& g) { g.on_complete(gadget_ctx_, leaf.path); })) return;
    next_ = Decide{top().index};
  }

  // --- interrupts --------------------------------------------------------------

  bool on_active_chain(const CoursePath& target) const {
    if (leaf_ && leaf_->path == target) return true;
    for (std::size_t k = 1; k < frames_.size(); ++k) {
      if (frames_[k].path == target) return true;
    }
    return false;
  }

  bool path_exists(const CoursePath& p) const {
    try {
      resolve_path(*root_, p);
      return true;
    } catch (const Error&) {
    }
    for (const auto& f : frames_) {
      if (f.path.is_prefix_of(p) && p.depth() == f.path.depth() + 1 &&
          f.spec.find_child(p.leaf())) {
        return true;
      }
    }
    return false;
  }

  void check_interrupt_target(const std::optional<CoursePath>& target) const {
    if (!target) {
      if (!leaf_ || leaf_->spec.kind != ElementKind::Scene) {
        throw Error("TargetNotActive", "no scene is open");
      }
      return;
    }
    if (on_active_chain(*target)) return;
    if (target->is_root() || path_exists(*target)) {
      throw Error("TargetNotActive", target->str() + " is not on the active chain");
    }
    throw Error("PathNotFound", "no element at " + target->str());
  }

  // Journal requests raised by one element's interrupt handlers are written
  // before the next element up the chain is interrupted. Other requests stay queued.
  void flush_journal_since(std::size_t mark) {
    if (quiet_) return;
    auto first = queue_.begin() + static_cast<std::ptrdiff_t>(mark);
    for (auto it = first; it != queue_.end(); ++it) {
      if (it->kind == Request::Kind::Journal) append(std::move(it->text), it->src);
    }
    queue_.erase(std::remove_if(first, queue_.end(),
                                [](const Request& r) { return r.kind == Request::Kind::Journal; }),
                 queue_.end());
  }

  // Fires onInterrupt innermost-first from the open element up to `target`.
  void interrupt_now(const std::optional<CoursePath>& requested) {
    check_interrupt_target(requested);
    CoursePath target = requested ? *requested : leaf_->path;
    status_ = SessionStatus::Running;
    if (leaf_) {
      Leaf leaf = std::move(*leaf_);
      leaf_.reset();
      append("interrupt:" + leaf.path.str(), JournalSource::Engine);
      std::size_t mark = queue_.size();
      if (leaf.spec.on_interrupt) run_program(*leaf.spec.on_interrupt, leaf.path, "onInterrupt");
      for (auto& g : gadgets_) g->on_interrupt(gadget_ctx_, leaf.path);
      flush_journal_since(mark);
      if (leaf.path == target) {
        divert_ = Decide{top().index};
        return;
      }
    }
    while (frames_.size() > 1) {
      Frame f = std::move(frames_.back());
      frames_.pop_back();
      append("interrupt:" + f.path.str(), JournalSource::Engine);
      std::size_t mark = queue_.size();
      if (f.spec.on_interrupt) run_program(*f.spec.on_interrupt, f.path, "onInterrupt");
      for (auto& g : gadgets_) g->on_interrupt(gadget_ctx_, f.path);
      flush_journal_since(mark);
      if (f.path == target) break;
    }
    divert_ = Decide{top().index};
  }

  // --- dynamic content ---------------------------------------------------------

  // Kind of the element at `path`, looking through overrides and the bodies
  // of active Streams before the static course tree.
  ElementKind kind_at(const CoursePath& path) const {
    if (path.is_root()) throw Error("PathNotFound", "the root stream cannot be overridden");
    const StoryElementSpec* scope = root_.get();
    CoursePath walked;
    for (std::size_t d = 0; d < path.depth(); ++d) {
      if (!walked.is_root()) {
        if (auto ov = overrides_.find(walked); ov != overrides_.end()) scope = &ov->second.body;
      }
      for (const auto& f : frames_) {
        if (f.path == walked && overrides_.find(walked) == overrides_.end()) scope = &f.spec;
      }
      if (scope->kind != ElementKind::Stream) {
        throw Error("NotAStream", "cannot descend through " + walked.str());
      }
      const StoryElementSpec* next = scope->find_child(path.segments()[d]);
      walked = walked.child(path.segments()[d]);
      if (!next) throw Error("PathNotFound", "no element at " + walked.str());
      scope = next;
    }
    return scope->kind;
  }

  void set_content(const CoursePath& path, std::string xml_text) {
    overrides_[path] = make_override(path, kind_at(path), std::move(xml_text));
  }

  static nlohmann::json overrides_json(const OverrideTable& table) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [path, ov] : table) {
      out.push_back({{"path", path.str()}, {"kind", to_string(ov.kind)}, {"xml", ov.xml}});
    }
    return out;
  }

  // --- suspend support ---------------------------------------------------------

  void take_checkpoint(const CoursePath& path) {
    Checkpoint c;
    c.path = path;
    c.clock = clock_;
    c.rng = rng_state();
    c.journal_length = journal_.size();
    c.step_count = step_count_;
    c.pass_from_start = pass_from_start_;
    c.leaves_in_pass = leaves_in_pass_;
    c.overrides = overrides_json(overrides_);
    try {
      auto snap = snapshot_global(globals_);
      c.globals = std::move(snap.document);
      c.skipped = std::move(snap.skipped);
    } catch (const Error& e) {
      c.snapshot_error = e.what();
    }
    checkpoint_ = std::move(c);
  }

  bool contains_scene(const StoryElementSpec& el, const CoursePath& at) {
    if (el.kind == ElementKind::Scene) return true;
    if (el.kind == ElementKind::Action) return false;
    StoryElementSpec body = resolve_content(at, el, source_, cache_, overrides_);
    for (const auto& c : body.children) {
      if (contains_scene(c, at.child(c.id))) return true;
    }
    return false;
  }

  void quiet_run(const StoryElementSpec& el, const CoursePath& at) {
    StoryElementSpec spec = resolve_content(at, el, source_, cache_, overrides_);
    if (spec.on_execute) run_program(*spec.on_execute, at, "onExecute");
    if (spec.kind == ElementKind::Action) run_program(spec.script, at, "script");
    if (spec.kind == ElementKind::Stream) {
      for (const auto& c : spec.children) {
        if (includable(c, at.child(c.id))) quiet_run(c, at.child(c.id));
      }
    }
    if (spec.on_complete) run_program(*spec.on_complete, at, "onComplete");
    queue_.clear();
  }

  // Re-runs guarded, scene-free RootStream children without journaling so
  // that function values dropped by the snapshot are defined again.
  void replay_init() {
    quiet_ = true;
    struct Reset {
      bool& flag;
      ~Reset() { flag = false; }
    } reset{quiet_};
    for (const auto& c : root_->children) {
      CoursePath at = CoursePath::root().child(c.id);
      if (!c.include_if || !includable(c, at) || contains_scene(c, at)) continue;
      quiet_run(c, at);
    }
    queue_.clear();
  }

  void resume_impl(const nlohmann::json& rec, const std::vector<JournalEntry>& prior) {
    if (!rec.is_object()) throw Error("MalformedSnapshot", "suspend record must be an object");
    GlobalSpace restored = restore_global(rec.at("globals"));
    std::size_t journal_length = rec.at("journalLength").get<std::size_t>();
    if (prior.size() < journal_length) {
      throw Error("MalformedSnapshot", "saved journal is shorter than the record says");
    }
    journal_.assign(prior.begin(), prior.begin() + static_cast<std::ptrdiff_t>(journal_length));
    for (const auto& [k, v] : restored.entries()) globals_.set(k, v);
    std::string path_text = rec.at("path").get<std::string>();
    if (!path_text.empty()) current_path_ = parse_path(path_text);
    frames_.push_back(Frame{CoursePath::root(), *root_, 0});

    if (rec.at("status").get<std::string>() == "halted") {
      status_ = SessionStatus::Halted;
      halt_reason_ = parse_halt_reason(rec.at("haltReason").get<std::string>());
      halt_detail_ = rec.at("haltDetail").get<std::string>();
      clock_ = rec.at("clock").get<std::int64_t>();
      step_count_ = rec.at("stepCount").get<std::size_t>();
      return;
    }

    status_ = SessionStatus::Running;
    replay_init();
    // the record wins over whatever the replay produced
    std::vector<std::string> stale;
    for (const auto& [k, v] : globals_.entries()) {
      if (!v.is_function() && !restored.contains(k)) stale.push_back(k);
    }
    for (const auto& k : stale) globals_.erase(k);
    for (const auto& [k, v] : restored.entries()) globals_.set(k, v);

    overrides_.clear();
    for (const auto& o : rec.at("overrides")) {
      std::string kind = o.at("kind").get<std::string>();
      ElementKind k = kind == "stream" ? ElementKind::Stream
                      : kind == "scene" ? ElementKind::Scene
                                        : ElementKind::Action;
      CoursePath p = parse_path(o.at("path").get<std::string>());
      overrides_[p] = make_override(p, k, o.at("xml").get<std::string>());
    }
    std::istringstream rng_in(rec.at("rng").get<std::string>());
    rng_in >> rng_;
    if (!rng_in) throw Error("MalformedSnapshot", "unreadable PRNG state");
    clock_ = rec.at("clock").get<std::int64_t>();
    step_count_ = rec.at("stepCount").get<std::size_t>();
    pass_from_start_ = rec.at("passFromStart").get<bool>();
    leaves_in_pass_ = rec.at("leavesInPass").get<std::size_t>();
    pending_ = ExecutionMode::regular();

    if (!current_path_ || current_path_->is_root()) {
      throw Error("MalformedSnapshot", "suspend record has no scene path");
    }
    const CoursePath target = *current_path_;
    std::size_t index = 0;
    for (std::size_t d = 0; d < target.depth(); ++d) {
      const std::string& id = target.segments()[d];
      const auto& children = top().spec.children;
      auto it = std::find_if(children.begin(), children.end(),
                             [&](const StoryElementSpec& c) { return c.id == id; });
      if (it == children.end()) {
        throw Error("MalformedSnapshot", "recorded path " + target.str() + " is not in the course");
      }
      index = static_cast<std::size_t>(it - children.begin());
      if (d + 1 == target.depth()) break;
      top().index = index;
      CoursePath at = top().path.child(id);
      StoryElementSpec body = resolve_content(at, *it, source_, cache_, overrides_, &warnings_);
      frames_.push_back(Frame{at, std::move(body), 0});
    }
    next_ = Execute{index, std::nullopt};
    run();
  }

  // --- builtins --------------------------------------------------------------------

  static std::string as_text(const Value& v) { return v.is_string() ? v.as_string() : to_display(v); }

  void install_builtins() {
    host_ = standard_builtins();
    auto path_arg = [](const HostCall& c, std::size_t i) {
      if (!c.arg(i).is_string()) runtime_error("expected a path string", c.pos, "TypeError");
      try {
        return parse_path(c.arg(i).as_string());
      } catch (const Error& e) {
        runtime_error(e.what(), c.pos, e.code());
      }
    };
    host_["journal"] = make_host("journal", 1, 1, [this](const HostCall& c) -> Value {
      queue_.push_back({Request::Kind::Journal, as_text(c.arg(0)), JournalSource::Script, {}, {}});
      return {};
    });
    host_["interrupt"] = make_host("interrupt", 0, 1, [this, path_arg](const HostCall& c) -> Value {
      std::optional<CoursePath> target;
      if (!c.args.empty() && !c.arg(0).is_null()) target = path_arg(c, 0);
      queue_.push_back({Request::Kind::Interrupt, {}, JournalSource::Script, target, {}});
      return {};
    });
    host_["setMode"] = make_host("setMode", 1, 2, [this](const HostCall& c) -> Value {
      if (!c.arg(0).is_string()) runtime_error("setMode expects a mode name", c.pos, "TypeError");
      std::optional<std::string> target;
      if (c.args.size() > 1 && !c.arg(1).is_null()) target = as_text(c.arg(1));
      try {
        queue_.push_back({Request::Kind::SetMode, {}, JournalSource::Script, {},
                          parse_mode(c.arg(0).as_string(), target)});
      } catch (const ScriptError&) {
        throw;
      } catch (const Error& e) {
        runtime_error(e.what(), c.pos, e.code());
      }
      return {};
    });
    host_["setContent"] = make_host("setContent", 2, 2, [this, path_arg](const HostCall& c) -> Value {
      CoursePath p = path_arg(c, 0);
      if (!c.arg(1).is_string()) runtime_error("setContent expects an XML string", c.pos, "TypeError");
      queue_.push_back({Request::Kind::SetContent, c.arg(1).as_string(), JournalSource::Script, p, {}});
      return {};
    });
    host_["finish"] = make_host("finish", 0, 0, [this](const HostCall&) -> Value {
      queue_.push_back({Request::Kind::Finish, {}, JournalSource::Script, {}, {}});
      return {};
    });
    host_["fail"] = make_host("fail", 1, 2, [](const HostCall& c) -> Value {
      std::string first = as_text(c.arg(0));
      if (c.args.size() == 2 && detail::is_identifier_like(first)) {
        runtime_error(as_text(c.arg(1)), c.pos, first);
      }
      runtime_error(first, c.pos, "ScriptFailure");
    });
    host_["random"] = make_host("random", 0, 0, [this](const HostCall&) -> Value {
      return next_random();
    });
    host_["now"] = make_host("now", 0, 0, [this](const HostCall&) -> Value {
      return static_cast<double>(clock_);
    });
    host_["log"] = make_host("log", 0, 16, [this](const HostCall& c) -> Value {
      std::string line;
      for (std::size_t i = 0; i < c.args.size(); ++i) {
        if (i) line += ' ';
        line += as_text(c.arg(i));
      }
      log_lines_.push_back(line);
      if (config_.log_sink) config_.log_sink(line);
      return {};
    });
    host_["loadXml"] = make_host("loadXml", 1, 1, [this](const HostCall& c) -> Value {
      if (!c.arg(0).is_string()) runtime_error("loadXml expects a locator", c.pos, "TypeError");
      try {
        return xml_to_value(xml::parse(source_.fetch(c.arg(0).as_string())));
      } catch (const ScriptError&) {
        throw;
      } catch (const Error& e) {
        runtime_error(e.what(), c.pos, e.code());
      }
    });
  }

  std::shared_ptr<const StoryElementSpec> root_;
  ContentSource& source_;
  SessionConfig config_;
  GlobalSpace globals_;
  HostBindings host_;
  Interpreter interp_;
  std::mt19937_64 rng_;
  Context gadget_ctx_;
  std::vector<std::unique_ptr<Gadget>> gadgets_;

  std::vector<Frame> frames_;
  std::optional<Leaf> leaf_;
  std::optional<CoursePath> current_path_;
  SessionStatus status_ = SessionStatus::Running;
  HaltReason halt_reason_ = HaltReason::None;
  std::string halt_detail_;
  ExecutionMode pending_;
  std::int64_t clock_ = 0;
  std::size_t step_count_ = 0;
  bool pass_from_start_ = false;
  std::size_t leaves_in_pass_ = 0;
  bool started_ = false;
  bool draining_ = false;
  bool quiet_ = false;

  OverrideTable overrides_;
  ContentCache cache_;
  std::vector<Diagnostic> warnings_;
  std::vector<JournalEntry> journal_;
  std::vector<std::string> log_lines_;
  std::deque<Request> queue_;
  std::optional<Op> next_;
  std::optional<Op> divert_;
  std::optional<Checkpoint> checkpoint_;

  std::unordered_map<std::string, std::shared_ptr<const ast::Program>> programs_;
  std::unordered_map<std::string, std::shared_ptr<const ast::Expr>> expressions_;
};

}  // namespace storyflow
