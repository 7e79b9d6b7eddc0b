#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gmls {

/// Base for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A local least-squares problem cannot determine its polynomial coefficients.
class UnisolvencyError : public Error {
 public:
  UnisolvencyError(std::size_t target, std::size_t neighbor_count, const std::string& why)
      : Error("target " + std::to_string(target) + " with " + std::to_string(neighbor_count) +
              " neighbors is not unisolvent: " + why),
        target_(target),
        neighbor_count_(neighbor_count) {}

  std::size_t target() const noexcept { return target_; }
  std::size_t neighbor_count() const noexcept { return neighbor_count_; }

 private:
  std::size_t target_;
  std::size_t neighbor_count_;
};

/// A target point has an empty epsilon-ball.
class EmptyNeighborhoodError : public Error {
 public:
  explicit EmptyNeighborhoodError(std::size_t target)
      : Error("target " + std::to_string(target) + " has no neighbors within epsilon"),
        target_(target) {}
  std::size_t target() const noexcept { return target_; }

 private:
  std::size_t target_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch)
      : Error("loss became non-finite at epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

/// Invalid experiment configuration. `line` is 1-based, 0 when unknown.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& msg, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace gmls
