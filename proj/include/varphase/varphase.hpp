#pragma once

// Umbrella header.
#define VARPHASE_VERSION "0.1.0"

#include "varphase/error.hpp"
#include "varphase/linalg.hpp"
#include "varphase/models.hpp"
#include "varphase/ode.hpp"
#include "varphase/spectral.hpp"
#include "varphase/periodic.hpp"
#include "varphase/floquet.hpp"
#include "varphase/variational.hpp"
#include "varphase/noise.hpp"
#include "varphase/sde.hpp"
#include "varphase/parallel.hpp"
#include "varphase/passage.hpp"
