#pragma once

#include <stdexcept>
#include <string>

namespace pffl {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define PFFL_DEFINE_ERROR(Name)                                     \
  class Name : public Error {                                       \
  public:                                                           \
    explicit Name(const std::string& msg) : Error(msg) {}           \
  }

// IO / format
PFFL_DEFINE_ERROR(FileNotFoundError);
PFFL_DEFINE_ERROR(IoError);
PFFL_DEFINE_ERROR(UnsupportedPngError);
PFFL_DEFINE_ERROR(BadMagicError);
PFFL_DEFINE_ERROR(DimensionOverflowError);

// Shape / domain preconditions
PFFL_DEFINE_ERROR(ShapeMismatchError);
PFFL_DEFINE_ERROR(ImageTooSmallError);
PFFL_DEFINE_ERROR(InvalidArgumentError);

// Oracle
PFFL_DEFINE_ERROR(BudgetExhaustedError);
PFFL_DEFINE_ERROR(RemoteUnavailableError);
PFFL_DEFINE_ERROR(ProtocolError);
PFFL_DEFINE_ERROR(BindFailureError);

// Attacks
PFFL_DEFINE_ERROR(NotAdversarialDirectionError);
PFFL_DEFINE_ERROR(InvalidStartError);
PFFL_DEFINE_ERROR(InitFailureError);

// Harness
PFFL_DEFINE_ERROR(ConstraintUnattainableError);
PFFL_DEFINE_ERROR(EmptyImageSetError);

#undef PFFL_DEFINE_ERROR

}  // namespace pffl
