#pragma once

#include <stdexcept>
#include <string>

namespace xspeech {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data: corpus rows, split files, configs, artifacts.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace xspeech
