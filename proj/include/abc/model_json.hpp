#pragma once

// JSON binding helpers for ModelSpec, shared by the model module and the job
// config parser.  Kept out of model.hpp so that header stays light.

#include <json.hpp>

#include <string>
#include <vector>

#include "abc/model.hpp"

namespace abc {

// Parses a model object, appending any problems (with JSON paths rooted at
// `path`) to `errors`.  Strict: unknown keys are errors.
ModelSpec model_from_json(const nlohmann::json& j, const std::string& path,
                          std::vector<std::string>& errors);

nlohmann::json model_to_json(const ModelSpec& spec);

// Shared strict-parsing utilities.
namespace strict {

// Closest candidate within edit distance 2; empty when nothing is close.
std::string closest(const std::string& word, const std::vector<std::string>& candidates);

// Reports keys of `j` not contained in `allowed`, suggesting the closest
// allowed key when the edit distance is small.
void check_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                        const std::string& path, std::vector<std::string>& errors);

double require_number(const nlohmann::json& j, const std::string& key, const std::string& path,
                      std::vector<std::string>& errors, bool* ok = nullptr);
long long require_integer(const nlohmann::json& j, const std::string& key, const std::string& path,
                          std::vector<std::string>& errors, bool* ok = nullptr);
std::string require_string(const nlohmann::json& j, const std::string& key, const std::string& path,
                           std::vector<std::string>& errors, bool* ok = nullptr);

}  // namespace strict

}  // namespace abc
