#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "weakhyp/cli/pipeline.hpp"
#include "weakhyp_scenarios.hpp"

namespace {

using namespace weakhyp;
using namespace weakhyp::cli;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<int> resolutions;
  std::string out;
  int threads = 1;  // accepted for interface stability; runs are single-threaded
  std::optional<double> eps_reg;
};

void apply(const Overrides& o, ExperimentConfig& cfg) {
  if (o.seed) cfg.seed = *o.seed;
  if (!o.resolutions.empty()) {
    for (int r : o.resolutions) {
      if (r < 2 || (r & (r - 1)) != 0) throw ParseError("--resolution", "grid points must be powers of two >= 2");
    }
    cfg.resolutions = o.resolutions;
  }
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.eps_reg) cfg.eps_reg = *o.eps_reg;
}

std::optional<std::string_view> find_scenario(const std::string& id) {
  for (const auto& [name, text] : kBundledScenarios) {
    if (!name.empty() && name == id) return text;
  }
  return std::nullopt;
}

void print_summary(const RunSummary& rs) {
  const auto& results = rs.summary["results"];
  for (const auto& [cmd, r] : results.items()) {
    std::cout << cmd << ": exit " << r["exit_code"].get<int>();
    if (cmd == "check") std::cout << ", all_hold=" << r["all_hold"].dump();
    if (cmd == "certify" && r.contains("all_pass")) std::cout << ", all_pass=" << r["all_pass"].dump();
    if (cmd == "certify" && r.contains("refusal")) std::cout << ", refused: " << r["refusal"].get<std::string>();
    if (cmd == "solve" && r["blew_up"].get<bool>()) std::cout << ", blew up at t=" << r["blowup_time"].dump();
    if (cmd == "reduce") {
      std::cout << ", N=" << r["N"].get<int>() << ", symmetriser residual " << r["symmetriser_residual"].dump();
    }
    std::cout << '\n';
  }
  std::cout << "wrote " << rs.output_dir.string() << '\n';
}

int run(const ExperimentConfig& cfg, const std::vector<Command>& commands) {
  const auto rs = run_commands(cfg, commands);
  print_summary(rs);
  return rs.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reductions, condition checks, solves and energy certificates for weakly hyperbolic equations"};
  app.require_subcommand(1);
  Overrides o;
  const auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "experiment configuration (YAML)");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "seed for every sampled quantity");
    sub->add_option("--resolution", o.resolutions, "grid points per axis, e.g. 128,256")->delimiter(',');
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "accepted for compatibility; runs are single-threaded");
    sub->add_option("--eps-reg", o.eps_reg, "regularization: a_i -> a_i + eps^2");
  };
  std::vector<std::pair<CLI::App*, Command>> verbs;
  for (auto c : {Command::reduce, Command::check, Command::solve, Command::certify}) {
    auto* sub = app.add_subcommand(to_string(c), std::string("run the ") + to_string(c) + " pipeline");
    add_common(sub, true);
    verbs.emplace_back(sub, c);
  }
  auto* scen = app.add_subcommand("scenarios", "bundled scenario library");
  scen->require_subcommand(1);
  scen->add_subcommand("list", "list bundled scenarios");
  auto* srun = scen->add_subcommand("run", "run a bundled scenario");
  std::string scenario_id;
  srun->add_option("id", scenario_id, "scenario name")->required();
  add_common(srun, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    for (const auto& [sub, cmd] : verbs) {
      if (!sub->parsed()) continue;
      auto cfg = load_config(o.config);
      apply(o, cfg);
      return run(cfg, {cmd});
    }
    if (scen->get_subcommand("list")->parsed()) {
      for (const auto& [name, text] : kBundledScenarios) {
        if (name.empty()) continue;
        const auto cfg = parse_config(std::string(text));
        std::string commands;
        for (auto c : cfg.commands) commands += (commands.empty() ? "" : ",") + std::string(to_string(c));
        std::cout << name << "  order " << cfg.spec.order << ", dim " << cfg.spec.dim << ", commands " << commands
                  << '\n';
      }
      return kExitOk;
    }
    if (srun->parsed()) {
      const auto text = find_scenario(scenario_id);
      if (!text) {
        std::cerr << "error: unknown scenario '" << scenario_id << "' (see 'scenarios list')\n";
        return kExitUsage;
      }
      auto cfg = parse_config(std::string(*text));
      apply(o, cfg);
      return run(cfg, cfg.commands);
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UnsupportedStructure& e) {
    std::cerr << "unsupported: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ArgumentError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kExitNumericalAbort;
  }
  return kExitUsage;
}
