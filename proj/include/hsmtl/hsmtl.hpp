// Copyright 2026 The hsmtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "hsmtl/error.hpp"
#include "hsmtl/tensor.hpp"
#include "hsmtl/ops.hpp"
#include "hsmtl/optim.hpp"
#include "hsmtl/gradcheck.hpp"
#include "hsmtl/text.hpp"
#include "hsmtl/encoder.hpp"
#include "hsmtl/metrics.hpp"
#include "hsmtl/multitask.hpp"
#include "hsmtl/checkpoint.hpp"
#include "hsmtl/config.hpp"
