/*
 *  Copyright 2026 The slacast Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

// Umbrella header.

#ifndef SLACAST_SLACAST_HPP
#define SLACAST_SLACAST_HPP

#include "slacast/autograd.hpp"
#include "slacast/baseline.hpp"
#include "slacast/binary_io.hpp"
#include "slacast/data.hpp"
#include "slacast/eval.hpp"
#include "slacast/layers.hpp"
#include "slacast/models.hpp"
#include "slacast/optim.hpp"
#include "slacast/parallel.hpp"
#include "slacast/primitives.hpp"
#include "slacast/random.hpp"
#include "slacast/tensor.hpp"
#include "slacast/train.hpp"

#endif  // SLACAST_SLACAST_HPP
