#pragma once

// Umbrella header.

#include "thermo/analysis.hpp"
#include "thermo/corpus.hpp"
#include "thermo/explain.hpp"
#include "thermo/hub.hpp"
#include "thermo/matrix.hpp"
#include "thermo/model.hpp"
#include "thermo/render.hpp"
#include "thermo/rng.hpp"
#include "thermo/serialize.hpp"
#include "thermo/vocab.hpp"
