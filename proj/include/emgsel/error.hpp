#pragma once

#include <stdexcept>
#include <string>

namespace emgsel {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a contract: malformed files, shape mismatches,
/// unknown labels (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A numeric routine failed to produce a usable result (CLI exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// The chosen normalizer channel's peak is below eps for this trial.
class NormalizerTooSmall : public DataError {
 public:
  NormalizerTooSmall(std::string trial_id, int channel, double peak)
      : DataError("normalizer channel " + std::to_string(channel) +
                  " peak too small in trial '" + trial_id + "'"),
        trial_id_(std::move(trial_id)),
        channel_(channel),
        peak_(peak) {}

  const std::string& trial_id() const { return trial_id_; }
  int channel() const { return channel_; }
  double peak() const { return peak_; }

 private:
  std::string trial_id_;
  int channel_;
  double peak_;
};

}  // namespace emgsel
