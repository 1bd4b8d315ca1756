#pragma once

#include <stdexcept>
#include <string>

namespace prunelens {

// Base of every error the toolkit raises. kind() is a stable machine-readable
// tag used by the CLI's single-line error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define PRUNELENS_DEFINE_ERROR(Name, tag)                          \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(tag, what) {}   \
  };

PRUNELENS_DEFINE_ERROR(ArgumentError, "argument")
PRUNELENS_DEFINE_ERROR(DataError, "data")
PRUNELENS_DEFINE_ERROR(ConfigError, "config")
PRUNELENS_DEFINE_ERROR(DegenerateDataError, "degenerate-data")
PRUNELENS_DEFINE_ERROR(CorruptFileError, "corrupt-file")
PRUNELENS_DEFINE_ERROR(VersionError, "version")
PRUNELENS_DEFINE_ERROR(IoError, "io")
PRUNELENS_DEFINE_ERROR(CollapseError, "collapse")

#undef PRUNELENS_DEFINE_ERROR

}  // namespace prunelens
