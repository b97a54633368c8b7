// Copyright 2026 The GeoForge Authors
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

#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

namespace geoforge {

struct TrainingLogEntry {
  std::size_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

inline std::string training_log_csv(const std::vector<TrainingLogEntry>& log) {
  std::ostringstream os;
  os.precision(9);
  os << "step,loss,grad_norm\n";
  for (const auto& e : log) os << e.step << ',' << e.loss << ',' << e.grad_norm << '\n';
  return os.str();
}

}  // namespace geoforge
