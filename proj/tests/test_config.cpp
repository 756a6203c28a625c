#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "weakhyp/cli/pipeline.hpp"

using namespace weakhyp;
using namespace weakhyp::cli;
namespace fs = std::filesystem;

namespace {

const char* kBase = R"yaml(
schema: 1
name: base
equation:
  order: 3
  dim: 1
  box_length: 2*pi
  T: 0.5
  a: ["sin(x1)^2"]
  lower: {b1_1: "sin(x1)^2*cos(x1)", b2_1: "sin(x1)*cos(x1)", b3: "1"}
  data: ["sin(x1)", "0", "0"]
resolutions: [32, 64]
)yaml";

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("weakhyp_test_config_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Expects a ParseError whose message contains every fragment.
void expect_parse_error(const std::string& text, const std::vector<std::string>& fragments) {
  try {
    parse_config(text);
    ADD_FAILURE() << "no error for:\n" << text;
  } catch (const ParseError& e) {
    for (const auto& f : fragments) EXPECT_NE(std::string(e.what()).find(f), std::string::npos) << e.what();
  }
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  if (pos == std::string::npos) throw std::logic_error("pattern not in base config: " + from);
  return s.replace(pos, from.size(), to);
}

}  // namespace

TEST(Config, ParsesFullDocument) {
  const auto cfg = parse_config(std::string(kBase) + R"yaml(
commands: [reduce, check]
solve: {cfl: 0.2, record_every: 3, expect_blowup: true, augment_level: 1}
checks: [lc_m3, theorem]
check: {refinement: 4}
certificates: [L2_m3, Hk_m3]
certify: {k: 3, no_loss_variant: true, stability_limit: 1.5}
seed: 17
eps_reg: 1e-3
output_dir: somewhere
)yaml");
  EXPECT_EQ(cfg.name, "base");
  EXPECT_EQ(cfg.spec.order, 3);
  EXPECT_NEAR(cfg.spec.box_length[0], 2.0 * std::numbers::pi, 1e-15);
  EXPECT_EQ(cfg.spec.T, 0.5);
  EXPECT_EQ(cfg.solve.config.T, 0.5);
  EXPECT_EQ(cfg.spec.lower.size(), 3u);
  EXPECT_EQ(cfg.spec.data.size(), 3u);
  EXPECT_EQ(cfg.commands, (std::vector<Command>{Command::reduce, Command::check}));
  EXPECT_EQ(cfg.solve.config.cfl, 0.2);
  EXPECT_EQ(cfg.solve.config.record_every, 3);
  EXPECT_TRUE(cfg.solve.expect_blowup);
  EXPECT_EQ(cfg.solve.augment_level, 1);
  EXPECT_EQ(cfg.checks, (std::vector<std::string>{"lc_m3", "theorem"}));
  EXPECT_EQ(cfg.check.refinement, 4);
  EXPECT_EQ(cfg.certificates, (std::vector<EstimateId>{EstimateId::L2_m3, EstimateId::Hk_m3}));
  EXPECT_EQ(cfg.certify_k, 3);
  EXPECT_TRUE(cfg.no_loss_variant);
  EXPECT_EQ(cfg.stability_limit, 1.5);
  EXPECT_EQ(cfg.resolutions, (std::vector<int>{32, 64}));
  EXPECT_EQ(cfg.seed, 17u);
  EXPECT_EQ(cfg.eps_reg, 1e-3);
  EXPECT_EQ(cfg.output_dir, "somewhere");
}

TEST(Config, DefaultsForOptionalKeys) {
  const auto cfg = parse_config("schema: 1\nequation: {order: 2, a: \"1\"}\n");
  EXPECT_EQ(cfg.spec.dim, 1);
  EXPECT_NEAR(cfg.spec.box_length[0], 2.0 * std::numbers::pi, 1e-15);
  EXPECT_EQ(cfg.spec.domain, Domain::Periodic);
  EXPECT_TRUE(cfg.commands.empty());
  EXPECT_TRUE(cfg.checks.empty());
  EXPECT_EQ(cfg.resolutions, (std::vector<int>{128}));
}

TEST(Config, MalformedExpressionNamesTheField) {
  expect_parse_error(replace(kBase, "\"sin(x1)^2\"]", "\"sin(x1\"]"), {"equation.a[0]", "line 9"});
  expect_parse_error(replace(kBase, "b3: \"1\"", "b3: \"1 +\""), {"equation.lower.b3"});
  expect_parse_error(replace(kBase, "\"sin(x1)\", \"0\"", "\"foo(x1)\", \"0\""), {"equation.data[0]"});
}

TEST(Config, UnknownKeysRejected) {
  expect_parse_error(std::string(kBase) + "colour: blue\n", {"colour", "unknown key"});
  expect_parse_error(replace(kBase, "  T: 0.5", "  T: 0.5\n  viscosity: 1"), {"equation.viscosity", "line"});
  expect_parse_error(std::string(kBase) + "solve: {cfl: 0.1, rk: 4}\n", {"solve.rk"});
}

TEST(Config, SchemaVersionRequired) {
  expect_parse_error(replace(kBase, "schema: 1", "schema: 2"), {"schema"});
  expect_parse_error(replace(kBase, "schema: 1", "title: x"), {"unknown key"});
  expect_parse_error("equation: {order: 2, a: \"1\"}\n", {"schema"});
}

TEST(Config, UnsupportedOrderAndTerms) {
  EXPECT_THROW(parse_config(replace(kBase, "order: 3", "order: 5")), UnsupportedStructure);
  EXPECT_THROW(parse_config(replace(kBase, "b3: \"1\"", "b4: \"1\"")), UnsupportedStructure);
}

TEST(Config, NumericFieldsValidated) {
  expect_parse_error(replace(kBase, "T: 0.5", "T: x1"), {"equation.T", "constant"});
  expect_parse_error(replace(kBase, "T: 0.5", "T: -1"), {"equation.T"});
  expect_parse_error(replace(kBase, "order: 3", "order: 2.5"), {"equation.order", "integer"});
  expect_parse_error(replace(kBase, "box_length: 2*pi", "box_length: [1, 2]"), {"equation.box_length"});
  expect_parse_error(replace(kBase, "[32, 64]", "[32, 48]"), {"resolutions"});
  expect_parse_error(std::string(kBase) + "checks: [lc_m9]\n", {"checks", "lc_m9"});
  expect_parse_error(std::string(kBase) + "certificates: [H3_m3]\n", {"certificates"});
  expect_parse_error(std::string(kBase) + "solve: {dealias: maybe}\n", {"solve.dealias"});
}

TEST(Config, EquationFileResolvedRelativeToConfig) {
  const auto dir = fresh_dir("eqfile");
  {
    std::ofstream(dir / "eq.yaml") << "order: 2\ndim: 2\na: [\"1\", \"2\"]\nlower: {c: \"0.5\"}\n";
    std::ofstream(dir / "run.yaml") << "schema: 1\nequation_file: eq.yaml\n";
  }
  const auto cfg = load_config((dir / "run.yaml").string());
  EXPECT_EQ(cfg.spec.order, 2);
  EXPECT_EQ(cfg.spec.dim, 2);
  EXPECT_EQ(cfg.spec.lower.count("c"), 1u);
  EXPECT_THROW(load_config((dir / "missing.yaml").string()), ParseError);
}

TEST(Pipeline, ReduceReportsPatternsAndResiduals) {
  auto cfg = parse_config(R"yaml(
schema: 1
equation:
  order: 3
  dim: 2
  a: ["sin(x1)^2", "1 + 0.5*cos(x2)"]
  lower: {b1_1: "cos(x1+x2)*sin(x1)^2", b1_2: "cos(x1+x2)*(1+0.5*cos(x2))", b3: "1"}
resolutions: [16]
)yaml");
  const auto out = cmd_reduce(cfg);
  EXPECT_EQ(out.report["N"], 5);
  EXPECT_EQ(out.report["kind"], "m3");
  EXPECT_LE(out.report["symmetriser_residual"].get<double>(), 1e-12);
  EXPECT_LE(out.report["quadratic_form_residual"].get<double>(), 1e-12);
  const std::vector<std::string> q = out.report["Q_pattern"];
  ASSERT_EQ(q.size(), 5u);
  EXPECT_EQ(q[4], "xx..c");
  EXPECT_EQ(out.exit_code, 0);
}

TEST(Pipeline, EmptyCheckListIsNoOp) {
  auto cfg = parse_config(kBase);
  const auto out = cmd_check(cfg);
  EXPECT_EQ(out.exit_code, 0);
  EXPECT_TRUE(out.report["reports"].empty());
  EXPECT_TRUE(out.report["all_hold"].get<bool>());
}

TEST(Pipeline, CheckFailureSetsExitCode) {
  auto cfg = parse_config(replace(kBase, "b1_1: \"sin(x1)^2*cos(x1)\"", "b1_1: \"1\"") + "checks: [lc_m3]\n");
  const auto out = cmd_check(cfg);
  EXPECT_EQ(out.exit_code, kExitConditionFailed);
  EXPECT_FALSE(out.report["all_hold"].get<bool>());
  EXPECT_THROW(run_condition(cfg.spec, "lc_m4", check_options(cfg)), ArgumentError);
}

TEST(Pipeline, ZeroDataSolveHasZeroNorms) {
  auto cfg = parse_config(replace(kBase, "data: [\"sin(x1)\", \"0\", \"0\"]", "data: []"));
  const auto out = cmd_solve(cfg);
  std::istringstream csv(out.files.at("norms.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "t,L2,H1,H2");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    EXPECT_EQ(line.substr(line.find(',')), ",0,0,0");
  }
  EXPECT_GT(rows, 10);
  EXPECT_EQ(out.exit_code, 0);
}

TEST(Pipeline, BlowUpTruncatesAndFlags) {
  const std::string text = R"yaml(
schema: 1
equation: {order: 2, a: "1", lower: {d: "-100"}, data: ["cos(x1)", "0"], T: 2}
solve: {blowup_threshold: 1e6}
resolutions: [16]
)yaml";
  auto cfg = parse_config(text);
  const auto out = cmd_solve(cfg);
  EXPECT_EQ(out.exit_code, kExitNumericalAbort);
  EXPECT_TRUE(out.report["blew_up"].get<bool>());
  const double tb = out.report["blowup_time"].get<double>();
  EXPECT_LT(tb, 2.0);
  std::istringstream csv(out.files.at("energy.csv"));
  std::string line, last;
  while (std::getline(csv, line)) last = line;
  EXPECT_LE(std::stod(last.substr(0, last.find(','))), tb);

  auto expected = parse_config(replace(text, "blowup_threshold: 1e6", "blowup_threshold: 1e6, expect_blowup: true"));
  EXPECT_EQ(cmd_solve(expected).exit_code, 0);
}

TEST(Pipeline, TrajectoryRoundTrip) {
  auto cfg = parse_config(kBase);
  const auto out = cmd_solve(cfg, {5});
  const auto recs = read_trajectory(out.files.at("trajectory.bin"));
  ASSERT_EQ(recs.size(), 5u);
  EXPECT_EQ(recs.front().time, 0.0);
  EXPECT_NEAR(recs.back().time, 0.5, 1e-12);
  for (const auto& r : recs) {
    EXPECT_EQ(r.shape, (std::vector<std::uint32_t>{64}));
    EXPECT_EQ(r.components, 3u);
    EXPECT_EQ(r.values.size(), 3u * 64u);
  }
  // U2 = d_t d_x u vanishes at t = 0, U1 = d_x^2 u = -sin.
  const double h = 2.0 * std::numbers::pi / 64;
  for (int p = 0; p < 64; ++p) {
    EXPECT_NEAR(recs.front().values[p], -std::sin(p * h), 1e-10);
    EXPECT_NEAR(recs.front().values[64 + p], 0.0, 1e-12);
  }
  EXPECT_THROW(read_trajectory("not a trajectory"), ParseError);
}

TEST(Pipeline, OutputDirectoryIsReplacedAtomically) {
  const auto dir = fresh_dir("atomic");
  auto cfg = parse_config(std::string(kBase) + "checks: [theorem]\n");
  cfg.output_dir = (dir / "run").string();
  fs::create_directories(dir / "run");
  std::ofstream(dir / "run" / "stale.txt") << "old";
  const auto rs = run_commands(cfg, {Command::reduce, Command::check, Command::solve});
  EXPECT_EQ(rs.exit_code, 0);
  EXPECT_FALSE(fs::exists(dir / "run" / "stale.txt"));
  for (const char* f : {"summary.json", "reduce.json", "check.json", "solve.json", "norms.csv", "energy.csv",
                        "trajectory.bin"}) {
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  }
  int entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
  EXPECT_EQ(entries, 1) << "staging directory left behind";
}

TEST(Pipeline, RerunsAreByteIdentical) {
  const auto dir = fresh_dir("determinism");
  auto cfg = parse_config(std::string(kBase) + "checks: [theorem]\ncertificates: [L2_m3]\nseed: 5\n");
  const std::vector<Command> all{Command::reduce, Command::check, Command::solve, Command::certify};
  cfg.output_dir = (dir / "a").string();
  run_commands(cfg, all);
  cfg.output_dir = (dir / "b").string();
  run_commands(cfg, all);
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    const auto name = e.path().filename();
    EXPECT_EQ(std::hash<std::string>{}(slurp(e.path())), std::hash<std::string>{}(slurp(dir / "b" / name))) << name;
  }
}

TEST(Pipeline, CertifyRefusalAndNoLossDiagnostic) {
  auto bad = parse_config(replace(kBase, "b1_1: \"sin(x1)^2*cos(x1)\"", "b1_1: \"1\"") + "certificates: [L2_m3]\n");
  const auto r = cmd_certify(bad);
  EXPECT_EQ(r.exit_code, kExitConditionFailed);
  EXPECT_NE(r.report["refusal"].get<std::string>().find("check"), std::string::npos);

  auto rough = parse_config(replace(kBase, "data: [\"sin(x1)\", \"0\", \"0\"]", "data: [\"0\", \"0\", \"lacunary(0.5, x1)\"]") +
                            "certificates: [Hk_m3]\ncertify: {k: 2, no_loss_variant: true}\n");
  rough.resolutions = {128, 256};
  const auto c = cmd_certify(rough);
  ASSERT_EQ(c.report["certificates"].size(), 2u);
  EXPECT_TRUE(c.report["certificates"][0]["passes"].get<bool>());
  EXPECT_FALSE(c.report["certificates"][1]["passes"].get<bool>());
  EXPECT_EQ(c.exit_code, 0);
}
