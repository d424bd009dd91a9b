// Copyright 2026 The ldmric Authors
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

#ifndef LDMRIC_ERRORS_H_
#define LDMRIC_ERRORS_H_

#include <stdexcept>
#include <string>

namespace ldmric {

// Base class for every error raised by the library. The CLI maps
// ConfigError/ShapeError/DataError/RangeError to exit status 2 and
// BackendError/TrainingError to exit status 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

// Failure of an external codec process; carries its exit status.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, int status)
      : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace ldmric

#endif  // LDMRIC_ERRORS_H_
