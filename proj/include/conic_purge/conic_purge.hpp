#pragma once

#include "errors.hpp"
#include "random.hpp"
#include "geometry.hpp"
#include "spectral.hpp"
#include "labels.hpp"
#include "proximity_detect.hpp"
#include "model_detect.hpp"
#include "synth.hpp"
#include "experiment.hpp"
#include "io.hpp"
