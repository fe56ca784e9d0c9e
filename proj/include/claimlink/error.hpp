#pragma once

#include <stdexcept>
#include <string>

namespace claimlink {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or arguments; maps to CLI exit code 2.
class ValidationError : public Error {
public:
  using Error::Error;
};

// Input record or file does not match its declared format.
class FormatError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

// A remote provider, scorer, or generator failed after all retries.
class RemoteError : public Error {
public:
  using Error::Error;
};

}  // namespace claimlink
