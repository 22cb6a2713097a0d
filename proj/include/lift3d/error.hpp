#pragma once

#include <stdexcept>
#include <string>

namespace lift3d {

// All library failures surface as lift3d::Error; the message is the
// stable, user-facing reason string (e.g. "degenerate mesh").
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string &message) {
  if (!condition) throw Error(message);
}

}  // namespace lift3d
