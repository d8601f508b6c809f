#pragma once

#include "peerbench/copula.hpp"
#include "peerbench/error.hpp"
#include "peerbench/leaf_model.hpp"
#include "peerbench/manifest.hpp"
#include "peerbench/mcmc.hpp"
#include "peerbench/normal.hpp"
#include "peerbench/panel.hpp"
#include "peerbench/pipeline.hpp"
#include "peerbench/random.hpp"
#include "peerbench/synth.hpp"
#include "peerbench/text.hpp"
#include "peerbench/trajtest.hpp"
#include "peerbench/tree.hpp"
#include "peerbench/tree_prior.hpp"
#include "peerbench/tree_sampler.hpp"
