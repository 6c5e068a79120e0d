#pragma once

#include <stdexcept>
#include <string>

namespace fdti {

/// Malformed input, failed invariant or shape mismatch.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

}  // namespace fdti
