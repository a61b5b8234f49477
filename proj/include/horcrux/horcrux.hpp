#pragma once

#include "horcrux/augment.hpp"
#include "horcrux/config.hpp"
#include "horcrux/dtm.hpp"
#include "horcrux/error.hpp"
#include "horcrux/hpss.hpp"
#include "horcrux/io.hpp"
#include "horcrux/metrics.hpp"
#include "horcrux/npy.hpp"
#include "horcrux/pipeline.hpp"
#include "horcrux/signal_model.hpp"
#include "horcrux/tfr.hpp"
