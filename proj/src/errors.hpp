#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace relkam {

// Exit-code classes used by the pipeline and the C API.
enum class ErrorKind { generic = 1, config = 2, resonance = 3, divergence = 4, io = 5 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& why)
      : Error(ErrorKind::config, field + ": " + why), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// A divisor fell below its threshold. `ell`, `i`, `j` locate it; for mode-level
// divisors i and j are signed modes, for block-level ones they are block indices.
class ResonanceError : public Error {
 public:
  ResonanceError(const std::string& what, std::vector<int> ell, int i, int j, double divisor,
                 double threshold)
      : Error(ErrorKind::resonance, what), ell_(std::move(ell)), i_(i), j_(j),
        divisor_(divisor), threshold_(threshold) {}
  const std::vector<int>& ell() const noexcept { return ell_; }
  int i() const noexcept { return i_; }
  int j() const noexcept { return j_; }
  double divisor() const noexcept { return divisor_; }
  double threshold() const noexcept { return threshold_; }

 private:
  std::vector<int> ell_;
  int i_, j_;
  double divisor_, threshold_;
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ErrorKind::divergence, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace relkam
