#include <gtest/gtest.h>

#include <set>

#include "storyflow/player.hpp"
#include "test_support.hpp"

using namespace storyflow;
using namespace storyflow::testing;

namespace {

using Strings = std::vector<std::string>;

std::shared_ptr<const CourseBundle> bundle(const std::string& dir) {
  return std::make_shared<const CourseBundle>(load_course_dir(dir));
}

std::string policy_text(const std::string& course, const std::string& file) {
  return read_file(fixture_dir(course) + "/" + file);
}

// DU -> PII set read straight from the fixture data file.
std::map<std::string, std::set<std::string>> du_coverage_oracle() {
  xml::Element doc = xml::parse(read_file(fixture_dir("mini-perps") + "/dus.xml"));
  std::map<std::string, std::set<std::string>> out;
  for (const auto& du : doc.children) {
    std::string piis = *du.attribute("piis");
    std::set<std::string> set;
    std::size_t start = 0;
    while (start <= piis.size()) {
      std::size_t comma = piis.find(',', start);
      if (comma == std::string::npos) comma = piis.size();
      set.insert(piis.substr(start, comma - start));
      start = comma + 1;
    }
    out[*du.attribute("id")] = set;
  }
  return out;
}

// Child stream ids of an override, in order.
Strings override_children(const Session& s, const std::string& path) {
  Strings out;
  auto it = s.overrides().find(parse_path(path));
  if (it == s.overrides().end()) return out;
  for (const auto& c : it->second.body.children) out.push_back(c.id);
  return out;
}

Value list_of(const Strings& items) {
  List l;
  for (const auto& i : items) l.emplace_back(i);
  return Value::list(std::move(l));
}

}  // namespace

// --- journal ------------------------------------------------------------------------

TEST(Journal, ScriptAndEngineEntries) {
  MemorySource src;
  Session s(course("<streamContent><action id='a'>journal('missionStart');</action>"
                   "<scene id='map' presenterType='message'/></streamContent>"),
            src);
  s.start();
  ASSERT_EQ(s.journal().size(), 4u);
  EXPECT_EQ(s.journal()[1], (JournalEntry{0, "missionStart", JournalSource::Script}));
  EXPECT_EQ(s.journal()[3], (JournalEntry{0, "exec:/map", JournalSource::Engine}));
}

TEST(Journal, LoggingOffRecordsNothing) {
  MemorySource src;
  SessionConfig cfg;
  cfg.journal_enabled = false;
  Session s(course("<streamContent><action id='a'>journal('x'); finish();</action></streamContent>"), src, cfg);
  s.start();
  EXPECT_EQ(s.halt_reason(), HaltReason::Finished);
  EXPECT_TRUE(s.journal().empty());
}

TEST(Journal, ExportLineCountsAndFormat) {
  std::vector<JournalEntry> entries = {{0, "exec:/a", JournalSource::Engine},
                                       {5, "say \"hi\"", JournalSource::Script},
                                       {9, "tick", JournalSource::Gadget}};
  std::ostringstream out;
  EXPECT_EQ(export_journal(entries, out), 3u);
  EXPECT_EQ(out.str(),
            "{\"t\":0,\"id\":\"exec:/a\",\"src\":\"engine\"}\n"
            "{\"t\":5,\"id\":\"say \\\"hi\\\"\",\"src\":\"script\"}\n"
            "{\"t\":9,\"id\":\"tick\",\"src\":\"gadget\"}\n");
  std::istringstream back(out.str());
  EXPECT_EQ(read_journal(back), entries);

  std::ostringstream empty;
  EXPECT_EQ(export_journal({}, empty), 0u);
  EXPECT_EQ(empty.str(), "");
}

TEST(Journal, BrokenSinkFails) {
  std::ostringstream sink;
  sink.setstate(std::ios::badbit);
  try {
    export_journal({{0, "a", JournalSource::Engine}}, sink);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "SinkWriteFailed");
  }
}

TEST(Journal, MalformedLines) {
  EXPECT_THROW(parse_journal_line("{\"t\":1}"), Error);
  EXPECT_THROW(parse_journal_line("{\"t\":1,\"id\":\"a\",\"src\":\"moon\"}"), Error);
  EXPECT_THROW(parse_journal_line("nope"), Error);
}

// --- LMS ----------------------------------------------------------------------------

TEST(Lms, DirectoryStoreReadsBackAfterCommit) {
  TempDir dir("lms");
  {
    DirectoryLms lms(dir.path() / "store");
    lms.set("suspend", "{\"a\":1}");
    lms.set("journal", "line\n");
    EXPECT_EQ(lms.get("suspend"), "{\"a\":1}");  // staged values are visible
    ASSERT_TRUE(lms.commit());
  }
  DirectoryLms fresh(dir.path() / "store");
  EXPECT_EQ(fresh.get("suspend"), "{\"a\":1}");
  EXPECT_EQ(fresh.get("journal"), "line\n");
  EXPECT_EQ(fresh.get("other"), std::nullopt);
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "store" / "suspend.tmp"));
}

TEST(Lms, UncommittedValuesAreLost) {
  TempDir dir("lms");
  {
    DirectoryLms lms(dir.path());
    lms.set("k", "v");
  }
  DirectoryLms fresh(dir.path());
  EXPECT_EQ(fresh.get("k"), std::nullopt);
}

TEST(Lms, KeysMustBeFileNames) {
  TempDir dir("lms");
  DirectoryLms lms(dir.path());
  EXPECT_THROW(lms.set("../evil", "x"), Error);
  EXPECT_THROW(lms.get(""), Error);
}

TEST(Lms, MemoryStoreSharedAcrossAdapters) {
  auto store = std::make_shared<MemoryLms::Store>();
  MemoryLms a(store);
  a.set("k", "v");
  EXPECT_TRUE(a.commit());
  MemoryLms b(store);
  EXPECT_EQ(b.get("k"), "v");
}

// --- presenters ------------------------------------------------------------------------

TEST(Presenters, RegistryFileAndBuiltins) {
  auto reg = parse_presenters(
      "<presenters><presenter type='HotspotPresenter' kind='choice'/></presenters>");
  EXPECT_EQ(reg.kind_of("HotspotPresenter"), "choice");
  EXPECT_EQ(reg.kind_of("message"), "message");
  EXPECT_EQ(reg.kind_of("auto"), "auto");
  EXPECT_EQ(reg.kind_of("Nope"), std::nullopt);
  EXPECT_THROW(parse_presenters("<presenters><presenter type='X' kind='video'/></presenters>"), Error);
}

TEST(Presenters, UnregisteredTypeWarnsOnce) {
  auto root = course("<streamContent><scene id='a' presenterType='Mystery'/>"
                     "<scene id='b' presenterType='Mystery'/><scene id='c' presenterType='choice'/>"
                     "</streamContent>");
  auto diags = check_presenters(*root, PresenterRegistry{});
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_EQ(diags[0].severity, Severity::Warning);
  EXPECT_EQ(diags[0].path.str(), "/a");
}

// --- course directories --------------------------------------------------------------------

TEST(CourseDir, ShippedCoursesLoadCleanly) {
  for (const char* name : {"diagnostic", "mini-cops", "mini-perps"}) {
    auto b = load_course_dir(fixture_dir(name));
    EXPECT_EQ(count_errors(b.diagnostics), 0u) << name;
    EXPECT_EQ(b.name, name);
    EXPECT_EQ(b.content_hash.size(), 16u);
  }
}

TEST(CourseDir, HashFollowsXmlContentOnly) {
  TempDir dir("hash");
  copy_fixture("mini-cops", dir);
  std::string before = content_hash(dir.path());
  EXPECT_EQ(content_hash(dir.path()), before);
  dir.write("notes.txt", "not course content");
  EXPECT_EQ(content_hash(dir.path()), before);
  dir.write("content/grade.xml", read_file(dir.str() + "/content/grade.xml") + "\n");
  EXPECT_NE(content_hash(dir.path()), before);
}

TEST(CourseDir, MissingCourseAndBrokenContent) {
  TempDir dir("course");
  EXPECT_THROW(load_course_dir(dir.path()), Error);
  dir.write("course.xml", "<streamContent><action id='a' contentURL='gone.xml'/></streamContent>");
  auto b = load_course_dir(dir.path());
  ASSERT_EQ(count_errors(b.diagnostics), 1u);
  EXPECT_EQ(b.diagnostics[0].code, "FetchFailed");
}

// --- policy ------------------------------------------------------------------------------

TEST(Policy, AcknowledgesMessage) {
  LearnerPolicy p("Global['Policy']=function(v){ return 'ack'; };");
  PresenterView v;
  v.path = parse_path("/briefing");
  v.kind = "message";
  GlobalSpace g;
  EXPECT_EQ(p.answer(v, g).as_string(), "ack");
  EXPECT_EQ(p.ticks(v, g), 0);
}

TEST(Policy, ChoiceAnswerIsRecorded) {
  MemorySource src;
  Session s(course("<streamContent><scene id='q1' presenterType='choice' recordTo='answer.q1'>"
                   "<option id='A'>a</option><option id='B'>b</option></scene>"
                   "<action id='f'>finish();</action></streamContent>"),
            src);
  s.start();
  LearnerPolicy p("Global['Policy'] = function(v) { return v.options[1]; };");
  drive_with_policy(s, p);
  EXPECT_EQ(s.halt_reason(), HaltReason::Finished);
  EXPECT_EQ(s.globals().get("answer.q1").as_string(), "B");
}

TEST(Policy, NullOnChoiceMeansFirstOption) {
  LearnerPolicy p("Global['Policy'] = function(v) { return null; };");
  PresenterView v;
  v.kind = "choice";
  v.options = {{"X", "x"}, {"Y", "y"}};
  GlobalSpace g;
  EXPECT_EQ(p.answer(v, g).as_string(), "X");
  v.kind = "input";
  EXPECT_TRUE(p.answer(v, g).is_null());
}

TEST(Policy, MissingPolicyFunction) {
  LearnerPolicy p("Global['Other'] = 1;");
  PresenterView v;
  GlobalSpace g;
  try {
    p.answer(v, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "PolicyMissing");
  }
  EXPECT_THROW(LearnerPolicy("Global['Policy'] = ;"), ScriptError);
}

TEST(Policy, ReadsCourseGlobalWithoutWriting) {
  LearnerPolicy p("Global['Policy'] = function(v) { return course('level') + 1; };");
  PresenterView v;
  GlobalSpace g;
  g.set("level", 4);
  EXPECT_EQ(p.answer(v, g).as_number(), 5);
  EXPECT_EQ(g.size(), 1u);
}

// --- suspend / resume --------------------------------------------------------------------

TEST(Suspend, DiagnosticAtSurvey) {
  auto b = bundle(fixture_dir("diagnostic"));
  Player player(b);
  player.session().globals().set("skipLogoAni", true);
  player.start();
  ASSERT_EQ(player.session().current_view()->path.str(), "/survey");
  MemoryLms lms;
  auto rec = player.suspend(lms);
  EXPECT_EQ(rec["path"], "/survey");
  EXPECT_EQ(rec["mode"], "REGULAR");
  EXPECT_EQ(rec["course"], "diagnostic");
  EXPECT_EQ(rec["contentHash"], b->content_hash);
  auto skipped = rec["skipped"].get<Strings>();
  EXPECT_NE(std::find(skipped.begin(), skipped.end(), "onSurveyComplete"), skipped.end());
  EXPECT_TRUE(lms.store()->count("suspend"));
}

TEST(Suspend, HaltedSessionRecord) {
  auto b = bundle(fixture_dir("diagnostic"));
  Player player(b);
  player.start();
  auto_drive(player.session());
  ASSERT_EQ(player.session().halt_reason(), HaltReason::Finished);
  MemoryLms lms;
  auto rec = player.suspend(lms);
  EXPECT_EQ(rec["status"], "halted");
  EXPECT_EQ(rec["haltReason"], "Finished");

  Player again(b);
  again.resume(lms);
  EXPECT_EQ(again.session().status(), SessionStatus::Halted);
  EXPECT_EQ(again.session().halt_reason(), HaltReason::Finished);
  EXPECT_EQ(again.session().journal(), player.session().journal());
}

TEST(Suspend, CommitFailure) {
  Player player(bundle(fixture_dir("diagnostic")));
  player.start();
  MemoryLms lms;
  lms.fail_commits = true;
  try {
    player.suspend(lms);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "CommitFailed");
  }
}

TEST(Suspend, RunningSessionIsNotSuspendable) {
  Player player(bundle(fixture_dir("diagnostic")));
  MemoryLms lms;
  EXPECT_THROW(player.suspend(lms), Error);
}

TEST(Resume, EmptyStoreIsMalformed) {
  Player player(bundle(fixture_dir("diagnostic")));
  MemoryLms lms;
  try {
    player.resume(lms);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "MalformedSnapshot");
  }
  MemoryLms garbage;
  garbage.set("suspend", "{not json");
  garbage.commit();
  Player other(bundle(fixture_dir("diagnostic")));
  EXPECT_THROW(other.resume(garbage), Error);
}

TEST(Resume, EditedCourseIsRefused) {
  TempDir dir("edit");
  copy_fixture("diagnostic", dir);
  MemoryLms lms;
  {
    Player player(bundle(dir.str()));
    player.start();
    player.suspend(lms);
  }
  dir.write("course.xml", read_file(dir.str() + "/course.xml") + "<!-- edited -->\n");
  Player player(bundle(dir.str()));
  try {
    player.resume(lms);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "HashMismatch");
  }
}

TEST(Resume, SameSuffixAsUninterruptedRun) {
  auto b = bundle(fixture_dir("mini-cops"));
  PlayerOptions opts;
  opts.seed = 7;
  std::string policy = policy_text("mini-cops", "policy.hsl");

  Player whole(b, opts);
  LearnerPolicy p1(policy);
  whole.start();
  drive_with_policy(whole.session(), p1);
  ASSERT_EQ(whole.session().halt_reason(), HaltReason::Finished);
  std::string expected = journal_text(whole.session().journal());

  for (std::size_t cut : {1u, 4u, 5u, 9u, 13u}) {
    MemoryLms lms;
    {
      Player first(b, opts);
      LearnerPolicy p(policy);
      first.start();
      drive_with_policy(first.session(), p, cut);
      ASSERT_EQ(first.session().status(), SessionStatus::AwaitingScene) << cut;
      first.suspend(lms);
    }
    Player second(b, opts);
    LearnerPolicy p(policy);
    second.resume(lms);
    drive_with_policy(second.session(), p);
    EXPECT_EQ(journal_text(second.session().journal()), expected) << "cut after " << cut;
  }
}

TEST(Resume, FunctionsComeBackThroughInitGuard) {
  auto b = bundle(fixture_dir("mini-perps"));
  PlayerOptions opts;
  opts.seed = 3;
  MemoryLms lms;
  {
    Player first(b, opts);
    LearnerPolicy p(policy_text("mini-perps", "policy-all-correct.hsl"));
    first.start();
    drive_with_policy(first.session(), p, 4);
    auto rec = first.suspend(lms);
    auto skipped = rec["skipped"].get<Strings>();
    EXPECT_NE(std::find(skipped.begin(), skipped.end(), "gradeDu"), skipped.end());
  }
  Player second(b, opts);
  second.resume(lms);
  EXPECT_TRUE(second.session().globals().get("gradeDu").is_function());
  EXPECT_TRUE(second.session().globals().get("schedule").is_function());
  // replayed init does not leak into the journal
  auto ids = all_ids(second.session().journal());
  EXPECT_EQ(std::count(ids.begin(), ids.end(), "exec:/init/data"), 1);
}

// --- fixtures: mini-cops -----------------------------------------------------------------

TEST(MiniCops, GoldenJournalSeed7) {
  Player player(bundle(fixture_dir("mini-cops")), PlayerOptions{7});
  LearnerPolicy p(policy_text("mini-cops", "policy.hsl"));
  player.start();
  drive_with_policy(player.session(), p);
  EXPECT_EQ(player.session().halt_reason(), HaltReason::Finished);
  EXPECT_EQ(journal_text(player.session().journal()),
            read_file(fixture_dir("mini-cops") + "/golden_seed7.jsonl"));
}

TEST(MiniCops, TimedSceneInterruptNeverCompletes) {
  Player player(bundle(fixture_dir("mini-cops")), PlayerOptions{7});
  LearnerPolicy p(policy_text("mini-cops", "policy.hsl"));
  player.start();
  drive_with_policy(player.session(), p);
  auto ids = all_ids(player.session().journal());
  auto first_exec = std::find(ids.begin(), ids.end(), "exec:/training/skillTest");
  ASSERT_NE(first_exec, ids.end());
  EXPECT_EQ(*(first_exec + 1), "interrupt:/training/skillTest");
  EXPECT_EQ(*(first_exec + 2), "skillTestTimeout");
  EXPECT_EQ(std::count(ids.begin(), ids.end(), "complete:/training/skillTest"), 1);
  EXPECT_EQ(std::count(ids.begin(), ids.end(), "remediation"), 1);
}

// --- fixtures: mini-perps scheduler ------------------------------------------------------

class MiniPerps : public ::testing::Test {
protected:
  std::shared_ptr<const CourseBundle> b = bundle(fixture_dir("mini-perps"));

  std::unique_ptr<Player> started(std::uint64_t seed, const Strings* required) {
    auto p = std::make_unique<Player>(b, PlayerOptions{seed});
    if (required) p->session().globals().set("piiRequired", list_of(*required));
    p->start();
    if (p->session().status() == SessionStatus::AwaitingScene) p->session().complete_scene(Value{});
    return p;
  }
};

TEST_F(MiniPerps, SelectsIntersectingDusInSomePermutation) {
  auto coverage = du_coverage_oracle();
  Strings required = {"pii1", "pii3"};
  std::set<std::string> expected;
  for (const auto& [du, piis] : coverage) {
    for (const auto& r : required) {
      if (piis.count(r)) expected.insert(du);
    }
  }
  ASSERT_EQ(expected, (std::set<std::string>{"du1", "du2"}));
  std::set<Strings> orders;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto p = started(seed, &required);
    Strings order = override_children(p->session(), "/test");
    EXPECT_EQ(std::set<std::string>(order.begin(), order.end()), expected);
    EXPECT_EQ(order.size(), expected.size());
    orders.insert(order);
  }
  EXPECT_EQ(orders.size(), 2u);  // both permutations occur over 20 seeds
}

TEST_F(MiniPerps, SameSeedSameGeneratedContent) {
  auto a = started(11, nullptr);
  auto c = started(11, nullptr);
  EXPECT_EQ(a->session().overrides().at(parse_path("/test")).xml,
            c->session().overrides().at(parse_path("/test")).xml);
}

TEST_F(MiniPerps, EmptyRequirementGivesEmptyTest) {
  Strings none;
  auto p = started(1, &none);
  Session& s = p->session();
  EXPECT_EQ(s.overrides().at(parse_path("/test")).xml, "<streamContent></streamContent>");
  auto ids = all_ids(s.journal());
  auto at = std::find(ids.begin(), ids.end(), "exec:/test");
  ASSERT_NE(at, ids.end());
  EXPECT_EQ(*(at + 1), "testStart");
  EXPECT_EQ(*(at + 2), "complete:/test");
}

TEST_F(MiniPerps, UncoveredPiiIsSessionError) {
  Strings bad = {"pii9"};
  auto p = started(1, &bad);
  EXPECT_EQ(p->session().halt_reason(), HaltReason::Error);
  EXPECT_EQ(p->session().halt_detail().rfind("UncoveredPii", 0), 0u);
}

TEST_F(MiniPerps, FailingPii3RetestsDu2Only) {
  Player player(b, PlayerOptions{5});
  LearnerPolicy pol(policy_text("mini-perps", "policy-fail-pii3.hsl"));
  player.start();
  drive_with_policy(player.session(), pol);
  Session& s = player.session();
  EXPECT_EQ(s.halt_reason(), HaltReason::Finished);
  EXPECT_EQ(override_children(s, "/remediation"), (Strings{"pii3"}));
  EXPECT_EQ(override_children(s, "/retest"), (Strings{"du2"}));
  auto execs = ids_with_prefix(s.journal(), "exec:");
  EXPECT_NE(std::find(execs.begin(), execs.end(), "/remediation/pii3"), execs.end());
  EXPECT_NE(std::find(execs.begin(), execs.end(), "/retest/du2/q2"), execs.end());
}

TEST_F(MiniPerps, AllCorrectNeverEntersRemediation) {
  for (std::uint64_t seed : {1u, 2u, 7u}) {
    Player player(b, PlayerOptions{seed});
    LearnerPolicy pol(policy_text("mini-perps", "policy-all-correct.hsl"));
    player.start();
    drive_with_policy(player.session(), pol);
    EXPECT_EQ(player.session().halt_reason(), HaltReason::Finished);
    auto execs = ids_with_prefix(player.session().journal(), "exec:");
    for (const auto& e : execs) {
      EXPECT_NE(e.rfind("/remediation", 0), 0u) << e;
      EXPECT_NE(e.rfind("/retest", 0), 0u) << e;
    }
  }
}

TEST_F(MiniPerps, AllFailedRetestsInitialSet) {
  Player player(b, PlayerOptions{9});
  LearnerPolicy pol(
      "Global['Policy'] = function(v) {"
      "  if (v.kind != 'choice') { return 'ok'; }"
      "  var right = course('answerKey')[v.segments[1] + '.' + v.segments[2]];"
      "  if (v.options[0] == right) { return v.options[1]; }"
      "  return v.options[0];"
      "};");
  player.start();
  drive_with_policy(player.session(), pol);
  Session& s = player.session();
  Strings first = override_children(s, "/test");
  Strings again = override_children(s, "/retest");
  EXPECT_EQ(std::set<std::string>(first.begin(), first.end()),
            std::set<std::string>(again.begin(), again.end()));
  EXPECT_EQ(override_children(s, "/remediation"),
            (Strings{"pii1", "pii2", "pii3", "pii4", "pii5"}));
}
