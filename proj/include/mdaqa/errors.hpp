#pragma once

#include <stdexcept>
#include <string>

namespace mdaqa {

// Error taxonomy. Every failure the library reports is one of these; the CLI
// maps UsageError to exit code 2 and everything else to exit code 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct InputError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };
struct DataError : Error { using Error::Error; };
struct LabelError : Error { using Error::Error; };
struct UsageError : Error { using Error::Error; };
struct PreconditionError : Error { using Error::Error; };
struct VersionError : Error { using Error::Error; };

}  // namespace mdaqa
