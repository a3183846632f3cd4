#pragma once

#include <stdexcept>
#include <string>

namespace regimeclust {

// Thrown when every EM restart ended in a degenerate state.
class FitError : public std::runtime_error {
 public:
  FitError(const std::string& message, int restarts_attempted, int degeneracy_events)
      : std::runtime_error(message),
        restarts_attempted(restarts_attempted),
        degeneracy_events(degeneracy_events) {}

  int restarts_attempted = 0;
  int degeneracy_events = 0;
};

// Thrown by file ingestion on malformed input; carries the location.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, int row, int column)
      : std::runtime_error(message), row(row), column(column) {}

  int row = -1;     // 1-based data row, -1 if not applicable
  int column = -1;  // 1-based column, -1 if not applicable
};

}  // namespace regimeclust
