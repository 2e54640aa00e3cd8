#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace recalnet {

// Base of everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (shape mismatch, empty input, ...).
struct InvariantError : Error {
  using Error::Error;
};

// Malformed input file; message carries the location.
struct ParseError : Error {
  using Error::Error;
};

// Bad run configuration (unknown key, missing path); maps to CLI exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

namespace detail {
inline void msg_append(std::ostringstream&) {}
template <typename T, typename... Rest>
void msg_append(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  msg_append(os, rest...);
}
}  // namespace detail

template <typename... Parts>
std::string msg(const Parts&... parts) {
  std::ostringstream os;
  detail::msg_append(os, parts...);
  return os.str();
}

}  // namespace recalnet
