// Copyright 2026 The stylespeech authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace stylespeech {

enum class ErrorKind {
  // front end
  UnknownSyllable,
  BadToneDigit,
  UnknownSymbol,
  // autodiff
  ShapeMismatch,
  InvalidProbability,
  NonScalarLoss,
  EmptyTape,
  IdOutOfRange,
  // model
  LengthMismatch,
  NegativeDuration,
  MissingDurations,
  // dsp
  UnsupportedFormat,
  IoFailure,
  BadFrameParams,
  BadBandEdges,
  MetadataMismatch,
  NegativeMagnitude,
  // metrics
  EmptyInput,
  MalformedLine,
  EmptyPool,
  // trainer
  CorruptCheckpoint,
  DatasetEmpty,
  NonFiniteLoss,
  // cli / data
  MissingWav,
  ParseError,
  JoinFailure,
  ConfigError,
  UsageError,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(name(kind) + ": " + message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  static std::string name(ErrorKind k) {
    switch (k) {
      case ErrorKind::UnknownSyllable: return "UnknownSyllable";
      case ErrorKind::BadToneDigit: return "BadToneDigit";
      case ErrorKind::UnknownSymbol: return "UnknownSymbol";
      case ErrorKind::ShapeMismatch: return "ShapeMismatch";
      case ErrorKind::InvalidProbability: return "InvalidProbability";
      case ErrorKind::NonScalarLoss: return "NonScalarLoss";
      case ErrorKind::EmptyTape: return "EmptyTape";
      case ErrorKind::IdOutOfRange: return "IdOutOfRange";
      case ErrorKind::LengthMismatch: return "LengthMismatch";
      case ErrorKind::NegativeDuration: return "NegativeDuration";
      case ErrorKind::MissingDurations: return "MissingDurations";
      case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
      case ErrorKind::IoFailure: return "IoFailure";
      case ErrorKind::BadFrameParams: return "BadFrameParams";
      case ErrorKind::BadBandEdges: return "BadBandEdges";
      case ErrorKind::MetadataMismatch: return "MetadataMismatch";
      case ErrorKind::NegativeMagnitude: return "NegativeMagnitude";
      case ErrorKind::EmptyInput: return "EmptyInput";
      case ErrorKind::MalformedLine: return "MalformedLine";
      case ErrorKind::EmptyPool: return "EmptyPool";
      case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
      case ErrorKind::DatasetEmpty: return "DatasetEmpty";
      case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
      case ErrorKind::MissingWav: return "MissingWav";
      case ErrorKind::ParseError: return "ParseError";
      case ErrorKind::JoinFailure: return "JoinFailure";
      case ErrorKind::ConfigError: return "ConfigError";
      case ErrorKind::UsageError: return "UsageError";
    }
    return "Error";
  }

 private:
  ErrorKind kind_;
};

// Exit code classes used by the CLI: 0 ok, 2 usage, 3 data, 4 numeric.
inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::UsageError:
    case ErrorKind::ConfigError:
      return 2;
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::NegativeMagnitude:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::NonScalarLoss:
    case ErrorKind::EmptyTape:
    case ErrorKind::InvalidProbability:
      return 4;
    default:
      return 3;
  }
}

}  // namespace stylespeech
