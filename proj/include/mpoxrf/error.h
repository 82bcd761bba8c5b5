#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mpoxrf {

// Invalid parameters in a configuration or domain object.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string &what, int line = 0)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    int line() const noexcept { return line_; }

  private:
    int line_;
};

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Malformed binary stream. offset is the byte position where decoding failed.
class ParseError : public IoError {
  public:
    enum class Kind { BadMagic, VersionMismatch, Truncated, PixelOutOfRange, BadLength };

    ParseError(Kind kind, std::uint64_t offset, const std::string &what)
        : IoError(what + " (byte offset " + std::to_string(offset) + ")"), kind_(kind),
          offset_(offset) {}

    Kind kind() const noexcept { return kind_; }
    std::uint64_t offset() const noexcept { return offset_; }

  private:
    Kind kind_;
    std::uint64_t offset_;
};

class AnalysisError : public std::runtime_error {
  public:
    enum class Kind { NoPeak, OneSided, DimensionMismatch, EdgeTooClose, EmptyRegion };

    AnalysisError(Kind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

  private:
    Kind kind_;
};

} // namespace mpoxrf
