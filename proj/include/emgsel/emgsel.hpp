#pragma once

#include "emgsel/core.hpp"
#include "emgsel/dataset_io.hpp"
#include "emgsel/dsp.hpp"
#include "emgsel/error.hpp"
#include "emgsel/features.hpp"
#include "emgsel/parallel.hpp"
#include "emgsel/rng.hpp"
#include "emgsel/search.hpp"
#include "emgsel/svm.hpp"
#include "emgsel/svm_io.hpp"
#include "emgsel/synth.hpp"
