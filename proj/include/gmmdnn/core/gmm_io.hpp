#pragma once

#include "gmmdnn/core/gmm.hpp"

#include <filesystem>
#include <string>

namespace gmmdnn {

// JSON document:
//   {"n": 2,
//    "classes": [{"prior": 0.5,
//                 "components": [{"weight": 1.0,
//                                 "mean": [0, 0],
//                                 "covariance": [[1, 0], [0, 1]]}]}]}
// Errors carry a JSON pointer to the first offending value.
GmmSpec parse_spec(const std::string& json_text);
GmmSpec load_spec_file(const std::filesystem::path& path);
std::string spec_to_json(const GmmSpec& spec);

}  // namespace gmmdnn
