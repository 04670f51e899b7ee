#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace regstokes {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class InvalidGeometry : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class InvalidRule : public Error {
 public:
  using Error::Error;
};

/// Evaluation of a singular kernel at (numerically) coincident points.
class SingularEvaluation : public Error {
 public:
  using Error::Error;
};

/// A point budget or dense-matrix memory budget would be exceeded.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// A factorised system is too close to singular to determine its outputs.
class NearSingularSystem : public Error {
 public:
  NearSingularSystem(const std::string& what, double rcond, double epsilon)
      : Error(what), rcond_(rcond), epsilon_(epsilon) {}

  double rcond() const noexcept { return rcond_; }
  double epsilon() const noexcept { return epsilon_; }

 private:
  double rcond_;
  double epsilon_;
};

/// Filtering of a two-grid pair left some force point without quadrature points nearby.
class DegeneratePair : public Error {
 public:
  using Error::Error;
};

/// Some coarse force points received no quadrature points in the nearest map.
class EmptyCoarsePoint : public Error {
 public:
  EmptyCoarsePoint(const std::string& what, std::vector<std::size_t> indices)
      : Error(what), indices_(std::move(indices)) {}

  const std::vector<std::size_t>& indices() const noexcept { return indices_; }

 private:
  std::vector<std::size_t> indices_;
};

}  // namespace regstokes
