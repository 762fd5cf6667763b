#pragma once

#include "gmmdnn/core/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gmmdnn {

enum class ExperimentKind {
  kConstructDeep,
  kVerifyDq,
  kClassify,
  kShallowBound,
  kCosineSnn,
  kNodeScalingSweep,
  kReluVariant,
};

std::string_view experiment_kind_name(ExperimentKind kind);
std::optional<ExperimentKind> parse_experiment_kind(std::string_view name);

struct RunOverrides {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::optional<ExperimentKind> kind;  // must agree with the config if both are set
};

struct ExperimentResult {
  int exit_code = 0;  // 0 pass, 1 verification failed
  bool verdict = false;
  std::filesystem::path out_dir;
  std::vector<std::string> artifacts;
  std::string summary;  // one line per headline number
};

// Loads the JSON config at `config_path`, runs it and writes the artifacts.
// Relative paths inside the config resolve against the config's directory.
// On error every artifact written by this call is removed and the Error is
// rethrown; a sentinel file `.gmmdnn.lock` guards the output directory.
ExperimentResult run_experiment(const std::filesystem::path& config_path,
                                const RunOverrides& overrides = {});

// Human-readable summary of a spec or an experiment config.
std::string describe(const std::filesystem::path& path);

// CSV helpers shared by the experiments: header row, 17 significant digits,
// LF line endings.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  CsvTable& row();
  CsvTable& add(double v);
  CsvTable& add(long long v);
  CsvTable& add(std::size_t v) { return add(static_cast<long long>(v)); }
  CsvTable& add(int v) { return add(static_cast<long long>(v)); }
  CsvTable& add(const std::string& v);
  CsvTable& add(const char* v) { return add(std::string(v)); }
  std::string str() const;
  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace gmmdnn
