#pragma once

#include "fdti/checkpoint.hpp"
#include "fdti/config.hpp"
#include "fdti/error.hpp"
#include "fdti/evaluation.hpp"
#include "fdti/ftstg.hpp"
#include "fdti/manifest.hpp"
#include "fdti/matrix.hpp"
#include "fdti/model.hpp"
#include "fdti/pipeline.hpp"
#include "fdti/rng.hpp"
#include "fdti/roadnet.hpp"
#include "fdti/simulator.hpp"
#include "fdti/training.hpp"
