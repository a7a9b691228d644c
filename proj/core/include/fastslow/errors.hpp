#pragma once

#include <stdexcept>
#include <string>

namespace fastslow {

/// Principal matrix logarithm is ill-conditioned: an eigenvalue sits within
/// tolerance of -1. Distances that hit this may fall back to a chordal bound,
/// but only where the caller explicitly opts in.
class CutLocusError : public std::runtime_error {
 public:
  explicit CutLocusError(const std::string& what) : std::runtime_error(what) {}
};

/// Fast-step resolution contract violated (h > 0.5 * epsilon).
class StepTooLargeError : public std::runtime_error {
 public:
  explicit StepTooLargeError(const std::string& what) : std::runtime_error(what) {}
};

/// Coefficient function is not centered against the invariant measure.
class NotCenteredError : public std::runtime_error {
 public:
  explicit NotCenteredError(const std::string& what) : std::runtime_error(what) {}
};

/// -sym(a_bar) has an eigenvalue below -tolerance; no real square root.
class NotPSDError : public std::runtime_error {
 public:
  explicit NotPSDError(const std::string& what) : std::runtime_error(what) {}
};

/// Spectral Poisson solver asked to run on a non-torus fast manifold.
class NotTorusError : public std::runtime_error {
 public:
  explicit NotTorusError(const std::string& what) : std::runtime_error(what) {}
};

/// Two ensembles of different sizes fed to the exact transport solver.
class SizeMismatchError : public std::runtime_error {
 public:
  explicit SizeMismatchError(const std::string& what) : std::runtime_error(what) {}
};

/// Rate fit attempted on errors indistinguishable from zero.
class DegenerateFitError : public std::runtime_error {
 public:
  explicit DegenerateFitError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fastslow
