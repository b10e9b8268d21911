#pragma once

#include "env.hpp"
#include "error.hpp"
#include "feature_table.hpp"
#include "nn.hpp"
#include "png_io.hpp"
#include "pyramid.hpp"
#include "qlearn.hpp"
#include "random.hpp"
#include "regressor.hpp"
#include "scoring.hpp"
#include "search.hpp"
#include "selection.hpp"
#include "serialization.hpp"
#include "synth.hpp"
