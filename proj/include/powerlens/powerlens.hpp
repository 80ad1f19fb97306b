#pragma once

// Umbrella header for the whole library.

#include "powerlens/bench.hpp"
#include "powerlens/constraints.hpp"
#include "powerlens/device_model.hpp"
#include "powerlens/error.hpp"
#include "powerlens/files.hpp"
#include "powerlens/memory.hpp"
#include "powerlens/metrics.hpp"
#include "powerlens/pipeline.hpp"
#include "powerlens/presets.hpp"
#include "powerlens/remote_backend.hpp"
#include "powerlens/sim_presets.hpp"
#include "powerlens/simulator.hpp"
#include "powerlens/svg_plot.hpp"
