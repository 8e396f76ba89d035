#ifndef MIXRES_MIXRES_HPP
#define MIXRES_MIXRES_HPP

#include "mixres/allocation.hpp"
#include "mixres/core.hpp"
#include "mixres/lgo.hpp"
#include "mixres/lmmse.hpp"
#include "mixres/model.hpp"
#include "mixres/parallel.hpp"
#include "mixres/rng.hpp"
#include "mixres/simulate.hpp"

#endif  // MIXRES_MIXRES_HPP
