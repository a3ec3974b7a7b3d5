#pragma once

// Umbrella header.

#include "tsk/corpus.hpp"
#include "tsk/datasets.hpp"
#include "tsk/error.hpp"
#include "tsk/evaluation.hpp"
#include "tsk/experiment.hpp"
#include "tsk/kernel_matrix.hpp"
#include "tsk/kernel_transforms.hpp"
#include "tsk/krr.hpp"
#include "tsk/parallel.hpp"
#include "tsk/string_kernels.hpp"
#include "tsk/transductive.hpp"
