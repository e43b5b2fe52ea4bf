#pragma once

#include <stdexcept>
#include <string>

namespace gat {

// Base for every error raised by the library. Each module throws the most
// specific subclass so callers (and the CLI) can tag messages by origin.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class GridError : public Error {
 public:
  using Error::Error;
};

class HorizonError : public Error {
 public:
  using Error::Error;
};

class DegenerateError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ExtrapolationError : public Error {
 public:
  using Error::Error;
};

class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, double achieved)
      : Error(what), achieved_(achieved) {}
  double achieved_tolerance() const noexcept { return achieved_; }

 private:
  double achieved_;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class EstimationError : public Error {
 public:
  EstimationError(const std::string& what, std::size_t available)
      : Error(what), available_(available) {}
  std::size_t available() const noexcept { return available_; }

 private:
  std::size_t available_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gat
