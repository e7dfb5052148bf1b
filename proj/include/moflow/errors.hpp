// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace moflow {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data violates a documented invariant (bad scene, non-finite values).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Bad or degenerate configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

/// Dataset-level inconsistency (missing teacher sample, empty split).
class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during optimization.
class TrainingFault : public Error {
 public:
  using Error::Error;
};

/// Non-finite state during ODE integration.
class SamplingFault : public Error {
 public:
  SamplingFault(const std::string& what, int step) : Error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Checkpoint or file format mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace moflow
