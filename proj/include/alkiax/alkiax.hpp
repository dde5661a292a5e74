/*
 * Copyright 2026 The alkiax Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "alkiax/approximator.hpp"
#include "alkiax/assumption_check.hpp"
#include "alkiax/config.hpp"
#include "alkiax/cstr.hpp"
#include "alkiax/errors.hpp"
#include "alkiax/extrapolation.hpp"
#include "alkiax/kernel.hpp"
#include "alkiax/kernel_matrix.hpp"
#include "alkiax/model.hpp"
#include "alkiax/model_io.hpp"
#include "alkiax/oracle.hpp"
#include "alkiax/partition.hpp"
#include "alkiax/process_oracle.hpp"
#include "alkiax/validation.hpp"
