#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>

namespace mixql {

enum class ErrorCategory {
  argument,
  domain,
  schema,
  parse,
  empty_input,
  degenerate_column,
  settings,
  numerical,
  rank_deficiency,
  inner_solver,
  collapse,
  design,
  io,
};

constexpr std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::argument: return "argument";
    case ErrorCategory::domain: return "domain";
    case ErrorCategory::schema: return "schema";
    case ErrorCategory::parse: return "parse";
    case ErrorCategory::empty_input: return "empty-input";
    case ErrorCategory::degenerate_column: return "degenerate-column";
    case ErrorCategory::settings: return "settings";
    case ErrorCategory::numerical: return "numerical";
    case ErrorCategory::rank_deficiency: return "rank-deficiency";
    case ErrorCategory::inner_solver: return "inner-solver";
    case ErrorCategory::collapse: return "collapse";
    case ErrorCategory::design: return "design";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

/// Base of every error thrown by the library. The category drives the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// An iterative solver ran out of steps. Carries the iterate it stopped at.
class InnerSolverError : public Error {
 public:
  InnerSolverError(const std::string& what, Eigen::VectorXd last_iterate)
      : Error(ErrorCategory::inner_solver, what), last_iterate_(std::move(last_iterate)) {}

  const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }

 private:
  Eigen::VectorXd last_iterate_;
};

/// CSV cell that could not be read; row is 1-based and counts the header line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row)
      : Error(ErrorCategory::parse, what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace mixql
