#pragma once

// mdt/errors.hpp: exception hierarchy shared by every mdt component.
//
// Each error carries a short machine-readable code (snake_case) next to the
// human message. The advisor service maps these onto HTTP reason codes.

#include <stdexcept>
#include <string>
#include <utility>

namespace mdt {

class error_base {
 public:
  explicit error_base(std::string code) : code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// An input violates a documented invariant or precondition.
class precondition_error : public std::invalid_argument, public error_base {
 public:
  precondition_error(std::string code, const std::string& what)
      : std::invalid_argument(what), error_base(std::move(code)) {}
};

// A sale would exceed the quota currently held.
class quota_cap_error : public precondition_error {
 public:
  explicit quota_cap_error(const std::string& what)
      : precondition_error("quota_cap_exceeded", what) {}
};

// A root finder or search failed to produce a certified answer.
class numerical_error : public std::runtime_error, public error_base {
 public:
  numerical_error(std::string code, const std::string& what)
      : std::runtime_error(what), error_base(std::move(code)) {}
};

// Risk-parameter estimation could not be carried out on the given reports.
class estimation_error : public numerical_error {
 public:
  estimation_error(std::string code, const std::string& what)
      : numerical_error(std::move(code), what) {}
};

namespace detail {

inline void require(bool ok, const char* code, const std::string& what) {
  if (!ok) throw precondition_error(code, what);
}

}  // namespace detail
}  // namespace mdt
