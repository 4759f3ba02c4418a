// Copyright 2026 The IST Lab Authors. All Rights Reserved.
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
// =============================================================================

#include "istlab/error.hpp"

namespace istlab {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kNonFinite: return "NonFinite";
    case Errc::kDimMismatch: return "DimMismatch";
    case Errc::kNonPositiveDiagonal: return "NonPositiveDiagonal";
    case Errc::kDegenerateEnsemble: return "DegenerateEnsemble";
    case Errc::kNotHomogeneous: return "NotHomogeneous";
    case Errc::kSingularMatrix: return "SingularMatrix";
    case Errc::kIncompatibleShape: return "IncompatibleShape";
    case Errc::kNoClosedForm: return "NoClosedForm";
    case Errc::kTooLarge: return "TooLarge";
    case Errc::kNoExpectation: return "NoExpectation";
    case Errc::kThetaInadmissible: return "ThetaInadmissible";
    case Errc::kStepTooLarge: return "StepTooLarge";
    case Errc::kWrongKind: return "WrongKind";
    case Errc::kStepSizeOutOfRange: return "StepSizeOutOfRange";
    case Errc::kBetaOutOfRange: return "BetaOutOfRange";
    case Errc::kDenominatorNonpositive: return "DenominatorNonpositive";
    case Errc::kConfigInvalid: return "ConfigInvalid";
    case Errc::kParseError: return "ParseError";
    case Errc::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace istlab
