#pragma once
// Umbrella header for the compressed-domain density estimation library.

#include "cde/autoencoder.hpp"
#include "cde/common.hpp"
#include "cde/data_io.hpp"
#include "cde/density.hpp"
#include "cde/sampler.hpp"
#include "cde/tasks.hpp"
#include "cde/trainer.hpp"
