#pragma once

// Umbrella header.

#include "dpd/complexity.hpp"
#include "dpd/errors.hpp"
#include "dpd/fft.hpp"
#include "dpd/fixedpoint.hpp"
#include "dpd/harness.hpp"
#include "dpd/ila.hpp"
#include "dpd/memory_poly.hpp"
#include "dpd/metrics.hpp"
#include "dpd/nn.hpp"
#include "dpd/pa_sim.hpp"
#include "dpd/signal.hpp"
#include "dpd/text.hpp"
#include "dpd/trainer.hpp"
