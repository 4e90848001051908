// Copyright 2026 The krembed Authors.
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

namespace krembed {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define KREMBED_DEFINE_ERROR(Name)                               \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  };

KREMBED_DEFINE_ERROR(DimensionMismatch)
KREMBED_DEFINE_ERROR(SizeOverflow)
KREMBED_DEFINE_ERROR(OutOfRange)
KREMBED_DEFINE_ERROR(NotPositiveDefinite)
KREMBED_DEFINE_ERROR(BtilNotSPD)
KREMBED_DEFINE_ERROR(GramNotSPD)
KREMBED_DEFINE_ERROR(RankDeficient)
KREMBED_DEFINE_ERROR(DegenerateSubspace)
KREMBED_DEFINE_ERROR(DegenerateInterval)
KREMBED_DEFINE_ERROR(SingularShiftedSolve)
KREMBED_DEFINE_ERROR(Breakdown)
KREMBED_DEFINE_ERROR(PoleHit)
KREMBED_DEFINE_ERROR(StructureMismatch)
KREMBED_DEFINE_ERROR(RankOverflow)
KREMBED_DEFINE_ERROR(FormatError)

#undef KREMBED_DEFINE_ERROR

}  // namespace krembed
