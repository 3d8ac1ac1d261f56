#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mvnet {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Tensor dimensions disagree with what an operation requires.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// A precondition on scalar arguments was violated (negative padding, b > T, ...).
class ContractError : public Error {
public:
  using Error::Error;
};

/// A network spec or search space breaks one of its structural rules.
class SpecError : public Error {
public:
  using Error::Error;
};

/// Streaming was requested for a network with a non-causal temporal layer.
class StreamingUnsupported : public Error {
public:
  StreamingUnsupported(std::string layer, const std::string &why)
      : Error("streaming unsupported: layer '" + layer + "' " + why),
        layer_(std::move(layer)) {}

  const std::string &layer() const noexcept { return layer_; }

private:
  std::string layer_;
};

/// Binary file decoding failure. Carries the byte offset where decoding stopped.
class FormatError : public Error {
public:
  enum class Kind { BadMagic, BadVersion, Truncated, DimOverflow, BadRank, Trailing, Duplicate, Io };

  FormatError(Kind kind, std::size_t offset, const std::string &what)
      : Error(std::string(kind_name(kind)) + " at byte " + std::to_string(offset) + ": " + what),
        kind_(kind), offset_(offset) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

  static const char *kind_name(Kind k) noexcept {
    switch (k) {
    case Kind::BadMagic:
      return "bad magic";
    case Kind::BadVersion:
      return "unsupported version";
    case Kind::Truncated:
      return "truncated";
    case Kind::DimOverflow:
      return "dimension overflow";
    case Kind::BadRank:
      return "bad rank";
    case Kind::Trailing:
      return "trailing bytes";
    case Kind::Duplicate:
      return "duplicate tensor";
    case Kind::Io:
      return "i/o error";
    }
    return "format error";
  }

private:
  Kind kind_;
  std::size_t offset_;
};

/// Text-format parse failure with the offending line and field.
class ParseError : public Error {
public:
  ParseError(std::size_t line, std::string field, const std::string &what)
      : Error("line " + std::to_string(line) + (field.empty() ? "" : " [" + field + "]") + ": " + what),
        line_(line), field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string &field() const noexcept { return field_; }

private:
  std::size_t line_;
  std::string field_;
};

} // namespace mvnet
