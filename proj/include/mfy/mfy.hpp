#pragma once

#include "mfy/averaging.hpp"
#include "mfy/core.hpp"
#include "mfy/fft.hpp"
#include "mfy/flow.hpp"
#include "mfy/grid.hpp"
#include "mfy/io.hpp"
#include "mfy/kernels.hpp"
#include "mfy/localtime.hpp"
#include "mfy/nlyi.hpp"
#include "mfy/particles.hpp"
#include "mfy/paths.hpp"
#include "mfy/rng.hpp"
#include "mfy/solver.hpp"
#include "mfy/transport.hpp"
