#pragma once

#include <stdexcept>
#include <string>

namespace guiagent {

// Root of every error the engine raises. The CLI maps anything derived from
// this to exit status 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace guiagent
