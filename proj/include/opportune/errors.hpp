#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace opportune {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- parsing ---

class SyntaxError : public Error {
public:
  SyntaxError(std::size_t line, std::size_t column, const std::string& msg)
      : Error("syntax error at line " + std::to_string(line) + ", col " +
              std::to_string(column) + ": " + msg),
        line(line),
        column(column) {}
  std::size_t line;
  std::size_t column;
};

class UnknownMethod : public Error {
public:
  explicit UnknownMethod(const std::string& name)
      : Error("unknown method: " + name), name(name) {}
  std::string name;
};

class UnboundVariable : public Error {
public:
  explicit UnboundVariable(const std::string& name)
      : Error("unbound variable: " + name), name(name) {}
  std::string name;
};

// --- graph ---

class UnknownNode : public Error {
public:
  explicit UnknownNode(std::size_t id)
      : Error("unknown node id: " + std::to_string(id)) {}
};

class NotASource : public Error {
public:
  explicit NotASource(const std::string& name)
      : Error("node is not a source operator: " + name) {}
};

// --- evaluation ---

class TypeMismatch : public Error {
public:
  explicit TypeMismatch(const std::string& msg) : Error("type mismatch: " + msg) {}
};

class MissingColumn : public Error {
public:
  explicit MissingColumn(const std::string& name)
      : Error("missing column: " + name), name(name) {}
  std::string name;
};

class EmptyAggregate : public Error {
public:
  explicit EmptyAggregate(const std::string& msg)
      : Error("aggregate over empty input: " + msg) {}
};

// --- cache ---

class NotCached : public Error {
public:
  explicit NotCached(std::size_t id)
      : Error("node not cached: " + std::to_string(id)) {}
};

class UncacheableResult : public Error {
public:
  UncacheableResult(std::size_t bytes, std::size_t budget)
      : Error("result of " + std::to_string(bytes) +
              " bytes exceeds cache budget of " + std::to_string(budget)) {}
};

class BudgetExhausted : public Error {
public:
  explicit BudgetExhausted(const std::string& msg)
      : Error("cache budget exhausted: " + msg) {}
};

// --- behavior ---

class NegativeDuration : public Error {
public:
  explicit NegativeDuration(double v)
      : Error("negative duration: " + std::to_string(v)) {}
};

// --- simulation / IO ---

class TraceParseError : public Error {
public:
  explicit TraceParseError(const std::string& msg)
      : Error("trace parse error: " + msg) {}
};

class DataLoadError : public Error {
public:
  explicit DataLoadError(const std::string& msg)
      : Error("data load error: " + msg) {}
};

class ResultMismatch : public Error {
public:
  explicit ResultMismatch(const std::string& msg)
      : Error("result mismatch between modes: " + msg) {}
};

}  // namespace opportune
