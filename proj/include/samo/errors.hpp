#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace samo {

/// Two containers (or a container and an index) disagree on layer layout.
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A computation produced or consumed a non-finite value.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, std::optional<std::size_t> task = std::nullopt)
      : std::runtime_error(task ? what + " (task " + std::to_string(*task) + ")" : what),
        task_(task) {}

  std::optional<std::size_t> task() const { return task_; }

 private:
  std::optional<std::size_t> task_;
};

/// Invalid user-facing configuration (bad value, unknown key, infeasible setup).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace samo
