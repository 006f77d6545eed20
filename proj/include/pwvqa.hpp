// Copyright 2026 The pwvqa Authors.
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

#include "pwvqa/causal.hpp"
#include "pwvqa/checkpoint.hpp"
#include "pwvqa/datagen.hpp"
#include "pwvqa/error.hpp"
#include "pwvqa/fusion.hpp"
#include "pwvqa/interchange.hpp"
#include "pwvqa/logits.hpp"
#include "pwvqa/metrics.hpp"
#include "pwvqa/model.hpp"
#include "pwvqa/pipeline.hpp"
