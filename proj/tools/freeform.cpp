#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "freeform/error.hpp"
#include "freeform/io.hpp"

namespace fs = std::filesystem;
using namespace freeform;

namespace {

struct Args {
  std::string config;
  std::string out_dir;
  std::size_t grid = 0;
  std::string tol_overrides;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Args& a, bool needs_out) {
  cmd->add_option("-c,--config", a.config, "JSON design config")->required()->check(
      CLI::ExistingFile);
  auto* out = cmd->add_option("-o,--out-dir", a.out_dir, "Directory for meshes, CSV and report");
  if (needs_out) out->required();
  cmd->add_option("--grid", a.grid, "Override the grid resolution (nodes per side)")
      ->check(CLI::Range(3, 4097));
  cmd->add_option("--tol-overrides", a.tol_overrides,
                  "Comma-separated name=value tolerances, e.g. trace_position=1e-5");
  cmd->add_flag("-q,--quiet", a.quiet, "Only print the exit status line");
}

void print(const RunReport& r, double seconds, bool quiet) {
  if (!quiet) {
    for (const CheckResult& c : r.checks) {
      std::printf("  check %-26s %-5s value=%.3e tol=%.1e\n", c.name.c_str(),
                  c.pass ? "ok" : "FAIL", c.value, c.tol);
    }
    for (const TraceSummary& t : r.traces) {
      std::printf("  trace %-6s rays=%zu failures=%zu max_dir=%.3e max_pos=%.3e %s\n",
                  t.name.c_str(), t.rays, t.failures, t.max_direction_error,
                  t.max_position_error, t.pass ? "ok" : "FAIL");
      for (const auto& [code, n] : t.failure_codes) std::printf("    %s x%zu\n", code.c_str(), n);
    }
    for (const FileEntry& f : r.files) {
      std::printf("  wrote %s (%ju bytes) sha256=%.16s\n", f.path.c_str(), f.bytes,
                  f.sha256.c_str());
    }
    for (const std::string& w : r.warnings) std::printf("  warning: %s\n", w.c_str());
  }
  if (r.error_code) std::printf("  %s\n", r.message.c_str());
  std::printf("%s %s: exit %d (%.2fs)\n", r.name.c_str(), r.stage.c_str(), r.exit_code, seconds);
}

int run(const Args& a, Stage stage) {
  DesignConfig cfg;
  try {
    cfg = load_config(a.config);
    if (a.grid) cfg.grid = a.grid;
    if (!a.tol_overrides.empty()) apply_overrides(cfg.tol, a.tol_overrides);
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return exit_code_for(e.code());
  }
  const auto t0 = std::chrono::steady_clock::now();
  const std::optional<fs::path> out =
      a.out_dir.empty() ? std::nullopt : std::optional<fs::path>(a.out_dir);
  const RunReport r = run_design(cfg, stage, out);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  print(r, s, a.quiet);
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Freeform lens and mirror designer with a ray-trace verifier"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "freeform 0.1.0");

  Args check_args, design_args, trace_args, export_args;
  auto* check = app.add_subcommand("check", "Check the solvability conditions only");
  add_common(check, check_args, false);
  auto* design = app.add_subcommand("design", "Solve, trace and export a design");
  add_common(design, design_args, false);
  auto* trace = app.add_subcommand("trace", "Re-trace the second face exported to --out-dir");
  add_common(trace, trace_args, true);
  auto* exp = app.add_subcommand("export", "Solve and write meshes and CSV grids");
  add_common(exp, export_args, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (check->parsed()) return run(check_args, Stage::Check);
  if (design->parsed()) return run(design_args, Stage::Design);
  if (trace->parsed()) return run(trace_args, Stage::Trace);
  return run(export_args, Stage::Export);
}
