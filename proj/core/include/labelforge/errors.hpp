#pragma once

#include <stdexcept>

namespace labelforge {

// Error taxonomy shared across the library. Call sites throw the most
// specific type; the CLI maps all of them to a nonzero exit status.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid architecture or shape configuration (channel mismatch, pooling
// pyramid does not fit, bad hyperparameter).
struct ConfigError : Error {
  using Error::Error;
};

// Malformed runtime input (batch shape mismatch, out-of-range target).
struct InputError : Error {
  using Error::Error;
};

// API misuse (backward on a non-scalar, optimizer step without gradients).
struct UsageError : Error {
  using Error::Error;
};

// Broken on-disk artifact (bad magic, truncated payload, version mismatch).
struct FormatError : Error {
  using Error::Error;
};

// Corpus ingestion problems (missing file, unknown label token, duplicate id).
struct IngestError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace labelforge
