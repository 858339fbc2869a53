#pragma once

#include <stdexcept>
#include <string>

namespace reenact {

/// Bad run/model configuration (unknown variant, invalid widths, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem trouble: missing manifest, unreadable image, unwritable dir.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Corrupted or inconsistent persisted state (checkpoints, manifests).
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values where finite math was required (NaN loss/gradient).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace reenact
