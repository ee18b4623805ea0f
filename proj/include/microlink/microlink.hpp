// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include "microlink/analysis.hpp"
#include "microlink/config.hpp"
#include "microlink/embedding.hpp"
#include "microlink/errors.hpp"
#include "microlink/experiment.hpp"
#include "microlink/io.hpp"
#include "microlink/linkage.hpp"
#include "microlink/math.hpp"
#include "microlink/model.hpp"
#include "microlink/priors.hpp"
#include "microlink/random.hpp"
#include "microlink/sampler.hpp"
#include "microlink/synth.hpp"
#include "microlink/vecmath.hpp"
