#pragma once

#include <stdexcept>
#include <string>

namespace sonnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An operation argument outside its admissible range (e.g. dropout rate).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Invalid model, training or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values detected; the message names the layer that produced them.
class NumericError : public Error {
 public:
  NumericError(std::string layer, const std::string& what)
      : Error(what), layer_(std::move(layer)) {}
  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

/// Dataset ingestion failures (missing columns, bad rows, irregular timestamps).
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint encoding or compatibility failures.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, const std::string& what) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace sonnet
