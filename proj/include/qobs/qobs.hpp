#pragma once

#include "qobs/brackets.hpp"
#include "qobs/config.hpp"
#include "qobs/drift_lab.hpp"
#include "qobs/kernel.hpp"
#include "qobs/mu_design.hpp"
#include "qobs/oscillatory.hpp"
#include "qobs/parallel.hpp"
#include "qobs/propagator.hpp"
#include "qobs/quadrature.hpp"
#include "qobs/signals.hpp"
#include "qobs/spectral_basis.hpp"
#include "qobs/toy_ode.hpp"
