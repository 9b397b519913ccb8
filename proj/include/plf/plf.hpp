#pragma once

#include "plf/autodiff.hpp"
#include "plf/bayes.hpp"
#include "plf/calendar.hpp"
#include "plf/data.hpp"
#include "plf/dataset.hpp"
#include "plf/ensemble.hpp"
#include "plf/errors.hpp"
#include "plf/io.hpp"
#include "plf/mdn.hpp"
#include "plf/network.hpp"
#include "plf/rng.hpp"
#include "plf/scoring.hpp"
#include "plf/tensor.hpp"
#include "plf/training.hpp"
