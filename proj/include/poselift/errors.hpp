#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace poselift {

/// Coarse classification used by the CLI to pick an exit code.
enum class ErrorClass { Usage, Data, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what)
      : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  ErrorClass cls_;
};

#define POSELIFT_DEFINE_ERROR(Name, Class)                         \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what)                         \
        : Error(ErrorClass::Class, #Name ": " + what) {}           \
  };

POSELIFT_DEFINE_ERROR(DegeneratePose, Data)
POSELIFT_DEFINE_ERROR(DegenerateGeometry, Data)
POSELIFT_DEFINE_ERROR(RigConflict, Usage)
POSELIFT_DEFINE_ERROR(InsufficientData, Data)
POSELIFT_DEFINE_ERROR(ShapeMismatch, Usage)
POSELIFT_DEFINE_ERROR(StepMismatch, Usage)
POSELIFT_DEFINE_ERROR(BatchTooSmall, Usage)
POSELIFT_DEFINE_ERROR(NonFinite, Numerical)
POSELIFT_DEFINE_ERROR(DegenerateConfiguration, Numerical)
POSELIFT_DEFINE_ERROR(EmptySplit, Data)
POSELIFT_DEFINE_ERROR(InvalidSplit, Usage)
POSELIFT_DEFINE_ERROR(InvalidArgument, Usage)
POSELIFT_DEFINE_ERROR(IoError, Data)

#undef POSELIFT_DEFINE_ERROR

class BehindCamera : public Error {
 public:
  explicit BehindCamera(std::size_t joint, const std::string& context = {})
      : Error(ErrorClass::Data,
              "BehindCamera: joint " + std::to_string(joint) +
                  " has non-positive depth" +
                  (context.empty() ? "" : " (" + context + ")")),
        joint_(joint) {}
  std::size_t joint() const noexcept { return joint_; }

 private:
  std::size_t joint_;
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::size_t batch, const std::string& detail)
      : Error(ErrorClass::Numerical, "NonFiniteLoss: batch " +
                                         std::to_string(batch) + ": " + detail),
        batch_(batch) {}
  std::size_t batch_index() const noexcept { return batch_; }

 private:
  std::size_t batch_;
};

/// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(ErrorClass::Data,
              source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace poselift
