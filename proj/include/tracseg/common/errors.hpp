#pragma once

#include <stdexcept>
#include <string>

namespace tracseg {

/// Invalid user-supplied configuration (sizes, thresholds, schedules).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (shape mismatch, bad index...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// File is not in a format we can read (bad magic, unsupported datatype).
class UnsupportedFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File claims a supported format but its payload is damaged or short.
class CorruptFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage was invoked before the stage it depends on.
class PrerequisiteError : public std::runtime_error {
 public:
  PrerequisiteError(const std::string& what, std::string required_command)
      : std::runtime_error(what), required_command_(std::move(required_command)) {}
  const std::string& required_command() const noexcept { return required_command_; }

 private:
  std::string required_command_;
};

/// Bundle content does not match its manifest, or the bundle is not sealed.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tracseg
