#pragma once

#include <stdexcept>
#include <string>

namespace uhal {

// Rejected tensor shapes, arities or arguments.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad input data: unreadable images, mismatched pairs, malformed configs.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Metadata container or JPEG segment problems. The kind lets callers tell
// "no metadata here" apart from "metadata present but damaged".
class MetadataError : public std::runtime_error {
 public:
  enum class Kind {
    NotFound,
    Truncated,
    MissingSoi,
    ChunkGap,
    BadMagic,
    CrcMismatch,
    UnsupportedVersion,
    ArchMismatch,
  };

  MetadataError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace uhal
