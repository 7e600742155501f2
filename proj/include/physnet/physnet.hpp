#pragma once

// Umbrella header for the whole library.

#include "physnet/core.hpp"
#include "physnet/diffgraph.hpp"
#include "physnet/evenodd.hpp"
#include "physnet/hamiltonian.hpp"
#include "physnet/integrate.hpp"
#include "physnet/neural.hpp"
#include "physnet/pipeline.hpp"
#include "physnet/sindy.hpp"
#include "physnet/systems.hpp"
