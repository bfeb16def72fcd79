// SPDX-License-Identifier: Apache-2.0
//
// Umbrella header.

#pragma once

#include "wpt/core.hpp"
#include "wpt/circuit_model.hpp"
#include "wpt/pim.hpp"
#include "wpt/closed_form.hpp"
#include "wpt/qcqp.hpp"
#include "wpt/sdp.hpp"
#include "wpt/golden_section.hpp"
#include "wpt/sdr.hpp"
#include "wpt/oracle.hpp"
#include "wpt/report.hpp"
#include "wpt/acceptance.hpp"
