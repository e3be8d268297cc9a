#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace transport {

enum class ErrorKind {
  Config,               // malformed options, spec terms out of bounds
  Parse,                // CSV input that is not strictly numeric
  Degenerate,           // empty arm, zero weight sum, single class
  Dimension,            // mismatched vector/matrix shapes
  Rank,                 // collinear features / singular bread
  Infeasible,           // tilting dual has no finite minimizer
  Separation,           // logistic MLE does not exist
  NotConverged,         // iterative fit stopped without meeting tolerance
  EstimandUnavailable,  // PATE inference or TMLE/IOSW without target rows
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace transport
