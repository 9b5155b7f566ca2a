#pragma once

#include <stdexcept>
#include <string>

namespace tsgan {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("ShapeError: " + msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("ConfigError: " + msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error("NumericError: " + msg) {}
};

struct InvalidLabel : std::runtime_error {
  explicit InvalidLabel(const std::string& msg) : std::runtime_error("InvalidLabel: " + msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error("IoError: " + msg) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error("FormatError: " + msg) {}
};

struct EmptyInput : std::runtime_error {
  explicit EmptyInput(const std::string& msg) : std::runtime_error("EmptyInput: " + msg) {}
};

struct InsufficientSamples : std::runtime_error {
  explicit InsufficientSamples(const std::string& msg)
      : std::runtime_error("InsufficientSamples: " + msg) {}
};

struct NoNoduleRegion : std::runtime_error {
  explicit NoNoduleRegion(const std::string& msg)
      : std::runtime_error("NoNoduleRegion: " + msg) {}
};

struct PairingError : std::runtime_error {
  explicit PairingError(const std::string& msg) : std::runtime_error("PairingError: " + msg) {}
};

}  // namespace tsgan
