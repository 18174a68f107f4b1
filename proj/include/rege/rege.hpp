#pragma once

#include "rege/checkpoint.hpp"
#include "rege/core.hpp"
#include "rege/graph.hpp"
#include "rege/io.hpp"
#include "rege/mdr.hpp"
#include "rege/nn.hpp"
#include "rege/perturb.hpp"
#include "rege/radii.hpp"
#include "rege/spectral.hpp"
#include "rege/trainer.hpp"
