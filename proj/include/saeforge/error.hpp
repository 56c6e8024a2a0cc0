// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace saeforge {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define SAEFORGE_DEFINE_ERROR(Name)                                 \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
  }

SAEFORGE_DEFINE_ERROR(IngestError);
SAEFORGE_DEFINE_ERROR(DegenerateDimension);
SAEFORGE_DEFINE_ERROR(ConfigError);
SAEFORGE_DEFINE_ERROR(FormatError);
SAEFORGE_DEFINE_ERROR(TrainingDiverged);
SAEFORGE_DEFINE_ERROR(FitError);
SAEFORGE_DEFINE_ERROR(TooSparse);
SAEFORGE_DEFINE_ERROR(TooDense);
SAEFORGE_DEFINE_ERROR(LabelParseError);
SAEFORGE_DEFINE_ERROR(PredictionParseError);
SAEFORGE_DEFINE_ERROR(ClientError);
SAEFORGE_DEFINE_ERROR(OptimizeDiverged);
SAEFORGE_DEFINE_ERROR(EmbedUnavailable);
SAEFORGE_DEFINE_ERROR(NotFound);

#undef SAEFORGE_DEFINE_ERROR

}  // namespace saeforge
