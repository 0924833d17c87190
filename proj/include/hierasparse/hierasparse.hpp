// SPDX-License-Identifier: Apache-2.0
#pragma once

// Umbrella header: the full compression + attention stack.
// hierasparse/report_json.hpp (JSON emission) is intentionally excluded so
// the core library carries no third-party includes.

#include "hierasparse/attention.hpp"
#include "hierasparse/compressed_cache.hpp"
#include "hierasparse/container.hpp"
#include "hierasparse/cost_model.hpp"
#include "hierasparse/errors.hpp"
#include "hierasparse/fp16.hpp"
#include "hierasparse/masks.hpp"
#include "hierasparse/nm_metadata.hpp"
#include "hierasparse/pipeline.hpp"
#include "hierasparse/pruner.hpp"
#include "hierasparse/tensor.hpp"
