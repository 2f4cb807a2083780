#pragma once

#include <stdexcept>
#include <string>

namespace stabopt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: mesh/BC specs, config files, density files.
class InputError : public Error {
 public:
  using Error::Error;
};

// det F <= 0 at a material point.
class SingularConfigurationError : public Error {
 public:
  using Error::Error;
};

class ElementInversionError : public Error {
 public:
  ElementInversionError(int element, const std::string& what)
      : Error(what), element_(element) {}
  int element() const { return element_; }

 private:
  int element_;
};

// Unrecoverable failure of an equilibrium solve, eigen solve or path trace.
class AnalysisError : public Error {
 public:
  using Error::Error;
};

}  // namespace stabopt
