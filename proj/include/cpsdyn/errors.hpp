#pragma once

#include <stdexcept>
#include <string>

namespace cpsdyn {

/// Argument outside the mathematical domain of an operation (e.g. gamma <= -1/F).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operands whose dimensions (F, r, index ranges) do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonHermitianError : public std::invalid_argument {
 public:
  NonHermitianError(const std::string& what, double max_asymmetry, int row, int col)
      : std::invalid_argument(what), max_asymmetry_(max_asymmetry), row_(row), col_(col) {}

  double max_asymmetry() const { return max_asymmetry_; }
  int row() const { return row_; }
  int col() const { return col_; }

 private:
  double max_asymmetry_;
  int row_;
  int col_;
};

/// Text input (Hamiltonian file, experiment config) that cannot be parsed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line = 0, int column = 0)
      : std::runtime_error(what), line_(line), column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace cpsdyn
