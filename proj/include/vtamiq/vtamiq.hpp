#pragma once

#include "vtamiq/checkpoint.hpp"
#include "vtamiq/dataset.hpp"
#include "vtamiq/evaluation.hpp"
#include "vtamiq/gradcheck.hpp"
#include "vtamiq/image_cache.hpp"
#include "vtamiq/model.hpp"
#include "vtamiq/run_config.hpp"
#include "vtamiq/sampler.hpp"
#include "vtamiq/synthetic.hpp"
#include "vtamiq/training.hpp"
