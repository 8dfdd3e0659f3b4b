#pragma once

#include <stdexcept>
#include <string>

namespace sdoh {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// malformed input data (carries file/line context in the message)
class ParseError : public Error {
 public:
  using Error::Error;
};

// a domain constraint was violated (duplicate ids, unknown labels, ...)
class ValidationError : public Error {
 public:
  using Error::Error;
};

// corpus too small for the requested split/fold geometry
class SizingError : public Error {
 public:
  using Error::Error;
};

// feature matrix layout does not match the model
class ShapeError : public Error {
 public:
  using Error::Error;
};

// annotation indices outside the wordpiece range
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// a required annotator/encoder adapter could not be resolved
class AdapterUnavailableError : public Error {
 public:
  using Error::Error;
};

class EmbeddingError : public Error {
 public:
  using Error::Error;
};

// generation backend unreachable after retries
class TransportError : public Error {
 public:
  using Error::Error;
};

// model bundle corrupt or from an incompatible configuration
class ModelIoError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

// latency reports measured on different workloads
class ComparabilityError : public Error {
 public:
  using Error::Error;
};

// backend failure on a gate-positive sentence; keeps the gate decision so
// the caller can fall back
class RoutedError : public Error {
 public:
  RoutedError(const std::string& what, bool gate_positive)
      : Error(what), gate_positive_(gate_positive) {}
  bool gate_positive() const { return gate_positive_; }

 private:
  bool gate_positive_;
};

class BenchAbortedError : public Error {
 public:
  BenchAbortedError(const std::string& what, int sentence_index)
      : Error(what), index_(sentence_index) {}
  int sentence_index() const { return index_; }

 private:
  int index_;
};

}  // namespace sdoh
