// Copyright 2026 The eend-dat Authors
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

#include "eend/checkpoint.hpp"
#include "eend/commands.hpp"
#include "eend/config.hpp"
#include "eend/corpus.hpp"
#include "eend/datagen.hpp"
#include "eend/eda.hpp"
#include "eend/encoder.hpp"
#include "eend/evaluation.hpp"
#include "eend/features.hpp"
#include "eend/inference.hpp"
#include "eend/losses.hpp"
#include "eend/model.hpp"
#include "eend/ops.hpp"
#include "eend/params.hpp"
#include "eend/scoring.hpp"
#include "eend/tensor.hpp"
#include "eend/training.hpp"
#include "eend/wav.hpp"
