#pragma once

#include <stdexcept>
#include <string>

namespace scenesynth {

// All recoverable failures in the library surface as this exception type.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define SS_CHECK(cond, msg)                               \
  do {                                                    \
    if (!(cond)) throw ::scenesynth::Error(msg);          \
  } while (0)

}  // namespace scenesynth
