// SPDX-License-Identifier: Apache-2.0
//
// Copyright (C) 2026 relaydof contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------


#pragma once

#include "relaydof/channel_core.hpp"
#include "relaydof/errors.hpp"
#include "relaydof/experiment.hpp"
#include "relaydof/interference_alignment.hpp"
#include "relaydof/klk_cancellation.hpp"
#include "relaydof/klk_simulation.hpp"
#include "relaydof/metrics.hpp"
#include "relaydof/opportunistic_pairing.hpp"
