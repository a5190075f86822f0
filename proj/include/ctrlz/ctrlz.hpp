// Copyright (C) 2026 The ctrlz-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ctrlz/dynamics.hpp"
#include "ctrlz/errors.hpp"
#include "ctrlz/models.hpp"
#include "ctrlz/rewards.hpp"
#include "ctrlz/rng.hpp"
#include "ctrlz/samplers.hpp"
#include "ctrlz/schedule.hpp"
