// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fairgen {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape / dimension mismatch.
struct ShapeError : Error {
  using Error::Error;
};

// Out-of-range index (embedding ids, vocabulary ids).
struct IndexError : Error {
  using Error::Error;
};

// Value outside its declared domain (attribute values, ratings, ratios).
struct DomainError : Error {
  using Error::Error;
};

// API contract violation (double backward, non-scalar loss, unfrozen tables).
struct ContractError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required; training divergence.
struct NumericError : Error {
  using Error::Error;
};

// Malformed input file; carries a line number where applicable.
struct ParseError : Error {
  using Error::Error;
};

// Bad or inconsistent run configuration.
struct ConfigError : Error {
  using Error::Error;
};

// A required artifact (dataset, checkpoint, lexicon) is missing or unusable.
struct ArtifactError : Error {
  using Error::Error;
};

}  // namespace fairgen
