#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "guiagent/gateway.hpp"
#include "guiagent/verification.hpp"

namespace guiagent {

struct TestRequirement {
  std::string id;
  std::string app;
  std::string raw_text;
  std::string source;
  std::string owner;
};

class FrontendError : public Error {
 public:
  using Error::Error;
};

struct SplitRequirement {
  std::string commands_text;
  std::vector<TestOracle> oracles;  // may be empty
};

SplitRequirement split_requirement(const TestRequirement& req, Gateway& gateway);

// UTF-8 text (one requirement) or a JSON batch [{id, app, text}].
std::vector<TestRequirement> load_requirements(const std::filesystem::path& file);

}  // namespace guiagent
