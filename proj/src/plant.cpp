// Copyright 2026 The bemctl Authors.
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

#include "bemctl/plant.hpp"

#include <cmath>
#include <string>

namespace bemctl {

PWMSchedule pwm_encode(double u, double u_max, int n_slots) {
  if (n_slots < 1) throw InvalidParameter("pwm_encode: n_slots must be >= 1");
  if (!(u_max > 0)) throw InvalidParameter("pwm_encode: u_max must be > 0");
  if (!(u >= 0 && u <= u_max)) {
    throw InvalidParameter("pwm_encode: command " + std::to_string(u) +
                           " outside [0, " + std::to_string(u_max) + "]");
  }
  const int on = static_cast<int>(std::lround(n_slots * (u / u_max)));
  PWMSchedule s;
  s.n_slots = n_slots;
  s.pattern.assign(static_cast<std::size_t>(n_slots), false);
  for (int i = 0; i < on; ++i) s.pattern[static_cast<std::size_t>(i)] = true;
  s.duty = static_cast<double>(on) / n_slots;
  return s;
}

double pwm_realized_power(const PWMSchedule& schedule, double u_max) {
  return schedule.duty * u_max;
}

}  // namespace bemctl
