#pragma once

#include "gadtraj/tensor.hpp"
#include "gadtraj/ops.hpp"
#include "gadtraj/tape.hpp"
#include "gadtraj/random.hpp"
#include "gadtraj/data.hpp"
#include "gadtraj/syngen.hpp"
#include "gadtraj/nn.hpp"
#include "gadtraj/gadformer.hpp"
#include "gadtraj/gru.hpp"
#include "gadtraj/optim.hpp"
#include "gadtraj/training.hpp"
#include "gadtraj/metrics.hpp"
#include "gadtraj/bas.hpp"
#include "gadtraj/config.hpp"
#include "gadtraj/checkpoint.hpp"
#include "gadtraj/manifest.hpp"
#include "gadtraj/experiment.hpp"
