#include "gmmdnn/gmmdnn.h"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

int exit_for(gmmdnn_status s) {
  switch (s) {
    case GMMDNN_ERR_NON_FINITE:
    case GMMDNN_ERR_ASSUMPTION_VIOLATED:
    case GMMDNN_ERR_INTERNAL:
      return kExitInternal;
    default:
      return kExitUsage;
  }
}

int fail(gmmdnn_status s) {
  std::cerr << gmmdnn_last_error_json() << "\n";
  return exit_for(s);
}

struct RunArgs {
  std::string config;
  std::string out;
  std::optional<uint64_t> seed;
  std::optional<size_t> samples;
};

int run(const std::string& kind, const RunArgs& a) {
  gmmdnn_run_options opt{};
  opt.kind = kind.c_str();
  if (!a.out.empty()) opt.out_dir = a.out.c_str();
  if (a.seed) {
    opt.has_seed = 1;
    opt.seed = *a.seed;
  }
  if (a.samples) opt.samples = *a.samples;
  int code = 0;
  char* summary = nullptr;
  const gmmdnn_status s = gmmdnn_run_experiment(a.config.c_str(), &opt, &code, &summary);
  if (s != GMMDNN_OK) return fail(s);
  std::cout << summary;
  gmmdnn_string_free(summary);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep networks for Gaussian mixture discriminants: construction and verification"};
  app.set_version_flag("--version", std::string(gmmdnn_version()));
  app.require_subcommand(1);

  const char* kinds[] = {"construct-deep", "verify-dq",          "classify",    "shallow-bound",
                         "cosine-snn",     "node-scaling-sweep", "relu-variant"};
  RunArgs args;
  std::string chosen;
  for (const char* k : kinds) {
    CLI::App* sub = app.add_subcommand(k, std::string("run a ") + k + " experiment");
    sub->add_option("--config", args.config, "experiment config (JSON)")->required();
    sub->add_option("--out", args.out, "output directory (overrides config)");
    sub->add_option("--seed", args.seed, "seed (overrides config)");
    sub->add_option("--samples", args.samples, "sample count (overrides config)");
    sub->callback([&chosen, k] { chosen = k; });
  }

  std::string path;
  CLI::App* desc = app.add_subcommand("describe", "summarize a spec or experiment config");
  desc->add_option("path", path, "spec or config file")->required();
  desc->callback([&chosen] { chosen = "describe"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  if (chosen == "describe") {
    char* text = nullptr;
    const gmmdnn_status s = gmmdnn_describe(path.c_str(), &text);
    if (s != GMMDNN_OK) return fail(s);
    std::cout << text;
    gmmdnn_string_free(text);
    return 0;
  }
  return run(chosen, args);
}
