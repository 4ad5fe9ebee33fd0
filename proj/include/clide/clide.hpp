#pragma once

#include "clide/detector.hpp"
#include "clide/embedding.hpp"
#include "clide/embf.hpp"
#include "clide/error.hpp"
#include "clide/io.hpp"
#include "clide/likelihood.hpp"
#include "clide/linalg.hpp"
#include "clide/metrics.hpp"
#include "clide/normality.hpp"
#include "clide/random.hpp"
#include "clide/selector.hpp"
#include "clide/spectral.hpp"
#include "clide/synth.hpp"
#include "clide/whtm.hpp"
