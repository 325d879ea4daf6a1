// Umbrella header for the multimax library.
#pragma once

#include "multimax/attention_stats.hpp"
#include "multimax/bundled_params.hpp"
#include "multimax/error.hpp"
#include "multimax/matrix.hpp"
#include "multimax/metrics.hpp"
#include "multimax/modulator.hpp"
#include "multimax/params_io.hpp"
#include "multimax/properties.hpp"
#include "multimax/reweight.hpp"
#include "multimax/types.hpp"
#include "multimax/nano/checkpoint.hpp"
#include "multimax/nano/model.hpp"
#include "multimax/nano/task.hpp"
#include "multimax/nano/train.hpp"
