#pragma once

// Experiment configuration files (YAML, schema 1).
//
//   schema: 1
//   name: m3_1d_lc1
//   description: free text
//   commands: [reduce, check, solve, certify]
//   equation:                      # or  equation_file: path/relative/to/this/file.yaml
//     order: 3
//     dim: 1
//     domain: periodic             # periodic | compact
//     box_length: 2*pi             # constant expression, or one per axis
//     origin: 0
//     T: 1
//     a: ["sin(x1)^2"]
//     lower: {b1_1: "sin(x1)^2*cos(x1)", b2_1: "sin(x1)*cos(x1)", b3: "1"}
//     data: ["sin(x1)", "cos(2*x1)", "0"]
//     forcing: "0"
//   solve: {cfl: 0.4, dealias: false, record_every: 0, target_records: 200,
//           blowup_threshold: 1e12, max_steps: 10000000, expect_blowup: false, augment_level: 0}
//   checks: [theorem]              # condition ids, or "theorem" for the order's own check
//   check: {refinement: 8, growth_limit: 2, xi_samples: 64}
//   certificates: [L2_m3, H1_m3, Hk_m3]
//   certify: {k: 2, no_loss_variant: false, stability_limit: 2}
//   resolutions: [128, 256]
//   seed: 1
//   eps_reg: 0
//   output_dir: out/m3_1d_lc1
//
// Every key is optional except schema and the equation; unknown keys are errors.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "weakhyp/conditions.hpp"
#include "weakhyp/energy.hpp"
#include "weakhyp/equation.hpp"
#include "weakhyp/errors.hpp"
#include "weakhyp/solver.hpp"

namespace weakhyp::cli {

inline constexpr int kSchemaVersion = 1;

enum class Command { reduce, check, solve, certify };

inline const char* to_string(Command c) {
  switch (c) {
    case Command::reduce: return "reduce";
    case Command::check: return "check";
    case Command::solve: return "solve";
    case Command::certify: return "certify";
  }
  return "?";
}

inline std::optional<Command> command_from_string(const std::string& s) {
  for (auto c : {Command::reduce, Command::check, Command::solve, Command::certify}) {
    if (s == to_string(c)) return c;
  }
  return std::nullopt;
}

struct SolveOptions {
  SolveConfig config;
  bool expect_blowup = false;
  int augment_level = 0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string description;
  std::vector<Command> commands;
  EquationSpec spec;
  std::vector<std::string> expression_text;  // source text of every expression, for reports
  SolveOptions solve;
  std::vector<std::string> checks;          // condition ids or "theorem"
  CheckOptions check;
  std::vector<EstimateId> certificates;
  int certify_k = 2;
  bool no_loss_variant = false;
  double stability_limit = 2.0;
  std::vector<int> resolutions{128};
  std::uint64_t seed = 1;
  double eps_reg = 0.0;
  std::string output_dir = "out";
};

namespace detail {

inline std::string where(const YAML::Node& n, const std::string& field) {
  const auto m = n.Mark();
  if (m.line < 0) return field;
  return field + " (line " + std::to_string(m.line + 1) + ")";
}

[[noreturn]] inline void fail(const YAML::Node& n, const std::string& field, const std::string& what) {
  throw ParseError(where(n, field), what);
}

inline void reject_unknown(const YAML::Node& map, const std::string& path, const std::set<std::string>& allowed) {
  if (!map.IsMap()) fail(map, path, "expected a mapping");
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) fail(kv.first, path.empty() ? key : path + "." + key, "unknown key");
  }
}

inline bool has_variable(const expr::NodePtr& e) {
  if (!e) return false;
  if (e->op == expr::Op::Var || e->op == expr::Op::Time) return true;
  return has_variable(e->lhs) || has_variable(e->rhs);
}

// A number, or a constant expression such as 2*pi.
inline double as_number(const YAML::Node& n, const std::string& field) {
  if (!n.IsScalar()) fail(n, field, "expected a number");
  const auto text = n.Scalar();
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  expr::NodePtr e;
  try {
    e = expr::parse(text, field);
  } catch (const ParseError& err) {
    fail(n, field, err.what());
  }
  if (has_variable(e)) fail(n, field, "expected a constant, got an expression in x or t");
  return expr::evaluate_at(e, std::span<const double>{}, 0.0);
}

inline long as_integer(const YAML::Node& n, const std::string& field) {
  const double v = as_number(n, field);
  if (v != std::floor(v) || std::abs(v) > 9e15) fail(n, field, "expected an integer");
  return static_cast<long>(v);
}

inline bool as_bool(const YAML::Node& n, const std::string& field) {
  try {
    return n.as<bool>();
  } catch (const YAML::Exception&) {
    fail(n, field, "expected true or false");
  }
}

inline std::string as_string(const YAML::Node& n, const std::string& field) {
  if (!n.IsScalar()) fail(n, field, "expected a string");
  return n.Scalar();
}

inline std::vector<std::string> as_string_list(const YAML::Node& n, const std::string& field) {
  if (n.IsScalar()) return {n.Scalar()};
  if (!n.IsSequence()) fail(n, field, "expected a list");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n.size(); ++i) out.push_back(as_string(n[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

inline CoefficientFunction as_expression(const YAML::Node& n, const std::string& field,
                                         std::vector<std::string>& texts) {
  const auto text = as_string(n, field);
  try {
    auto f = CoefficientFunction::parse(text, field);
    texts.push_back(field + " = " + text);
    return f;
  } catch (const ParseError& err) {
    // The parser names the field; add the line.
    throw ParseError(where(n, field), std::string(err.what()).substr(field.size() + 2));
  }
}

inline std::vector<double> per_axis(const YAML::Node& n, const std::string& field, int dim) {
  if (n.IsSequence()) {
    if (static_cast<int>(n.size()) != dim) fail(n, field, "expected " + std::to_string(dim) + " entries");
    std::vector<double> v;
    for (int i = 0; i < dim; ++i) v.push_back(as_number(n[i], field + "[" + std::to_string(i) + "]"));
    return v;
  }
  return std::vector<double>(dim, as_number(n, field));
}

inline EquationSpec parse_equation(const YAML::Node& n, std::vector<std::string>& texts) {
  const std::string p = "equation";
  reject_unknown(n, p, {"order", "dim", "domain", "box_length", "origin", "T", "a", "lower", "data", "forcing"});
  EquationSpec s;
  if (!n["order"]) fail(n, p, "missing 'order'");
  s.order = static_cast<int>(as_integer(n["order"], p + ".order"));
  s.dim = n["dim"] ? static_cast<int>(as_integer(n["dim"], p + ".dim")) : 1;
  if (s.dim < 1 || s.dim > 3) fail(n["dim"], p + ".dim", "dimension must be 1, 2 or 3");
  if (!is_supported_order(s.order)) {
    throw UnsupportedStructure(where(n["order"], p + ".order") + ": order " + std::to_string(s.order) +
                               " is not supported (orders 2, 3 and even orders >= 4)");
  }
  if (n["domain"]) {
    const auto d = as_string(n["domain"], p + ".domain");
    if (d == "periodic") s.domain = Domain::Periodic;
    else if (d == "compact") s.domain = Domain::Compact;
    else fail(n["domain"], p + ".domain", "expected 'periodic' or 'compact'");
  }
  s.box_length = n["box_length"] ? per_axis(n["box_length"], p + ".box_length", s.dim)
                                 : std::vector<double>(s.dim, 2.0 * std::numbers::pi);
  s.origin = n["origin"] ? per_axis(n["origin"], p + ".origin", s.dim) : std::vector<double>(s.dim, 0.0);
  for (double L : s.box_length) {
    if (!(L > 0.0)) fail(n["box_length"], p + ".box_length", "box lengths must be positive");
  }
  if (n["T"]) s.T = as_number(n["T"], p + ".T");
  if (!(s.T > 0.0)) fail(n["T"], p + ".T", "final time must be positive");

  if (!n["a"]) fail(n, p, "missing principal coefficients 'a'");
  const auto& a = n["a"];
  if (a.IsScalar() && s.dim == 1) {
    s.principal.push_back(as_expression(a, p + ".a", texts));
  } else {
    if (!a.IsSequence() || static_cast<int>(a.size()) != s.dim) {
      fail(a, p + ".a", "expected " + std::to_string(s.dim) + " principal coefficients");
    }
    for (int i = 0; i < s.dim; ++i) s.principal.push_back(as_expression(a[i], p + ".a[" + std::to_string(i) + "]", texts));
  }
  if (n["lower"]) {
    const auto& lo = n["lower"];
    if (!lo.IsMap()) fail(lo, p + ".lower", "expected a mapping of coefficient names");
    const auto names = lower_term_names(s.order, s.dim);
    for (const auto& kv : lo) {
      const auto key = kv.first.as<std::string>();
      if (std::find(names.begin(), names.end(), key) == names.end()) {
        throw UnsupportedStructure(where(kv.first, p + ".lower." + key) + ": lower-order term '" + key +
                                   "' is outside the order-" + std::to_string(s.order) + " family");
      }
      s.lower[key] = as_expression(kv.second, p + ".lower." + key, texts);
    }
  }
  if (n["data"]) {
    const auto& d = n["data"];
    if (!d.IsSequence()) fail(d, p + ".data", "expected a list of initial data");
    if (static_cast<int>(d.size()) > s.order) fail(d, p + ".data", "at most " + std::to_string(s.order) + " data");
    for (std::size_t j = 0; j < d.size(); ++j) {
      s.data.push_back(as_expression(d[j], p + ".data[" + std::to_string(j) + "]", texts));
    }
  }
  if (n["forcing"]) s.forcing = as_expression(n["forcing"], p + ".forcing", texts);
  validate(s);
  return s;
}

inline void parse_solve(const YAML::Node& n, SolveOptions& o) {
  const std::string p = "solve";
  reject_unknown(n, p, {"cfl", "dealias", "record_every", "target_records", "blowup_threshold", "max_steps",
                        "expect_blowup", "augment_level"});
  if (n["cfl"]) o.config.cfl = as_number(n["cfl"], p + ".cfl");
  if (n["dealias"]) o.config.dealias = as_bool(n["dealias"], p + ".dealias");
  if (n["record_every"]) o.config.record_every = static_cast<int>(as_integer(n["record_every"], p + ".record_every"));
  if (n["target_records"]) {
    o.config.target_records = static_cast<int>(as_integer(n["target_records"], p + ".target_records"));
  }
  if (n["blowup_threshold"]) o.config.blowup_threshold = as_number(n["blowup_threshold"], p + ".blowup_threshold");
  if (n["max_steps"]) o.config.max_steps = as_integer(n["max_steps"], p + ".max_steps");
  if (n["expect_blowup"]) o.expect_blowup = as_bool(n["expect_blowup"], p + ".expect_blowup");
  if (n["augment_level"]) {
    o.augment_level = static_cast<int>(as_integer(n["augment_level"], p + ".augment_level"));
    if (o.augment_level < 0 || o.augment_level > 2) fail(n["augment_level"], p + ".augment_level", "must be 0, 1 or 2");
  }
  if (!(o.config.cfl > 0.0)) fail(n["cfl"], p + ".cfl", "must be positive");
}

inline std::filesystem::path config_dir(const std::string& source) {
  if (source.empty()) return std::filesystem::current_path();
  const auto parent = std::filesystem::path(source).parent_path();
  return parent.empty() ? std::filesystem::current_path() : parent;
}

}  // namespace detail

// Parses a configuration document. `source` is the file it came from (for
// resolving equation_file); empty for inline text.
inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(source.empty() ? "config" : source, e.what());
  }
  if (!root || !root.IsMap()) throw ParseError("config", "expected a mapping at the top level");
  using namespace detail;
  reject_unknown(root, "", {"schema", "name", "description", "commands", "equation", "equation_file", "solve",
                            "checks", "check", "certificates", "certify", "resolutions", "seed", "eps_reg",
                            "output_dir"});
  if (!root["schema"]) throw ParseError("schema", "missing schema version (expected schema: 1)");
  if (as_integer(root["schema"], "schema") != kSchemaVersion) {
    fail(root["schema"], "schema", "unsupported schema version (this build reads schema 1)");
  }

  ExperimentConfig c;
  if (root["name"]) c.name = as_string(root["name"], "name");
  if (root["description"]) c.description = as_string(root["description"], "description");
  if (root["commands"]) {
    for (const auto& s : as_string_list(root["commands"], "commands")) {
      const auto cmd = command_from_string(s);
      if (!cmd) fail(root["commands"], "commands", "unknown command '" + s + "'");
      c.commands.push_back(*cmd);
    }
  }

  if (root["equation"] && root["equation_file"]) {
    fail(root["equation_file"], "equation_file", "give either 'equation' or 'equation_file', not both");
  }
  if (root["equation"]) {
    c.spec = parse_equation(root["equation"], c.expression_text);
  } else if (root["equation_file"]) {
    const auto rel = as_string(root["equation_file"], "equation_file");
    const auto path = config_dir(source) / rel;
    std::ifstream in(path);
    if (!in) fail(root["equation_file"], "equation_file", "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    YAML::Node eq;
    try {
      eq = YAML::Load(ss.str());
    } catch (const YAML::ParserException& e) {
      throw ParseError(path.string(), e.what());
    }
    c.spec = parse_equation(eq, c.expression_text);
  } else {
    throw ParseError("equation", "missing equation (give 'equation' or 'equation_file')");
  }

  if (root["solve"]) parse_solve(root["solve"], c.solve);
  c.solve.config.T = c.spec.T;

  if (root["checks"]) {
    c.checks = as_string_list(root["checks"], "checks");
    for (const auto& id : c.checks) {
      if (id != "theorem" && !condition_from_string(id)) fail(root["checks"], "checks", "unknown condition '" + id + "'");
    }
  }
  if (root["check"]) {
    const auto& n = root["check"];
    reject_unknown(n, "check", {"refinement", "growth_limit", "xi_samples"});
    if (n["refinement"]) c.check.refinement = static_cast<int>(as_integer(n["refinement"], "check.refinement"));
    if (n["growth_limit"]) c.check.growth_limit = as_number(n["growth_limit"], "check.growth_limit");
    if (n["xi_samples"]) c.check.xi_samples = static_cast<int>(as_integer(n["xi_samples"], "check.xi_samples"));
  }
  if (root["certificates"]) {
    for (const auto& s : as_string_list(root["certificates"], "certificates")) {
      const auto id = estimate_from_string(s);
      if (!id) fail(root["certificates"], "certificates", "unknown estimate '" + s + "'");
      c.certificates.push_back(*id);
    }
  }
  if (root["certify"]) {
    const auto& n = root["certify"];
    reject_unknown(n, "certify", {"k", "no_loss_variant", "stability_limit"});
    if (n["k"]) c.certify_k = static_cast<int>(as_integer(n["k"], "certify.k"));
    if (n["no_loss_variant"]) c.no_loss_variant = as_bool(n["no_loss_variant"], "certify.no_loss_variant");
    if (n["stability_limit"]) c.stability_limit = as_number(n["stability_limit"], "certify.stability_limit");
    if (c.certify_k < 0) fail(n["k"], "certify.k", "must be non-negative");
  }
  if (root["resolutions"]) {
    c.resolutions.clear();
    const auto& n = root["resolutions"];
    if (n.IsScalar()) {
      c.resolutions.push_back(static_cast<int>(as_integer(n, "resolutions")));
    } else if (n.IsSequence()) {
      for (std::size_t i = 0; i < n.size(); ++i) {
        c.resolutions.push_back(static_cast<int>(as_integer(n[i], "resolutions[" + std::to_string(i) + "]")));
      }
    } else {
      fail(n, "resolutions", "expected a number or a list");
    }
    if (c.resolutions.empty()) fail(n, "resolutions", "needs at least one resolution");
  }
  if (root["seed"]) {
    const long s = as_integer(root["seed"], "seed");
    if (s < 0) fail(root["seed"], "seed", "must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (root["eps_reg"]) c.eps_reg = as_number(root["eps_reg"], "eps_reg");
  if (root["output_dir"]) c.output_dir = as_string(root["output_dir"], "output_dir");
  for (int r : c.resolutions) {
    if (r < 2 || (r & (r - 1)) != 0) throw ParseError("resolutions", "grid points must be powers of two >= 2");
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("--config", "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace weakhyp::cli
