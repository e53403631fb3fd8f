#pragma once

#include <stdexcept>
#include <string>

namespace mstereo {

// Base class for all recoverable errors raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ZeroTranslation : Error {
  ZeroTranslation() : Error("translation is zero; epipolar geometry undefined") {}
};

struct DegenerateLine : Error {
  DegenerateLine() : Error("epipolar line is degenerate (pixel at the epipole)") {}
};

struct DegenerateRay : Error {
  DegenerateRay() : Error("ray is degenerate; dehomogenization undefined") {}
};

struct ImageTooSmall : Error {
  explicit ImageTooSmall(const std::string& what) : Error(what) {}
};

struct TooFewCorrespondences : Error {
  explicit TooFewCorrespondences(const std::string& what) : Error(what) {}
};

struct DegenerateConfiguration : Error {
  explicit DegenerateConfiguration(const std::string& what) : Error(what) {}
};

struct CheiralityAmbiguous : Error {
  CheiralityAmbiguous() : Error("no relative-pose candidate wins the cheirality vote") {}
};

struct NoOverlap : Error {
  explicit NoOverlap(const std::string& what) : Error(what) {}
};

struct EmptyOverlap : Error {
  EmptyOverlap() : Error("no jointly valid pixels") {}
};

struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& what) : Error(what) {}
};

struct AllDegenerate : Error {
  explicit AllDegenerate(const std::string& what) : Error(what) {}
};

struct InvalidSpec : Error {
  explicit InvalidSpec(const std::string& what) : Error(what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace mstereo
