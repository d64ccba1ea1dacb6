#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace kst {

// Malformed or inconsistent caller input (bad file, dimension mismatch,
// out-of-range parameter). CLI exit code 2.
class input_error : public std::runtime_error {
public:
  explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical conditioning failure (factorization could not be stabilized,
// non-positive log argument). CLI exit code 3.
class numerical_error : public std::runtime_error {
public:
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation not defined for the given configuration (e.g. metric tensor of a
// non-differentiable kernel). CLI exit code 4.
class unsupported_error : public std::runtime_error {
public:
  explicit unsupported_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void warn(const std::string& msg) {
  std::fprintf(stderr, "kst: warning: %s\n", msg.c_str());
}

}  // namespace kst
