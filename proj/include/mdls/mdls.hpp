#pragma once
// Everything.

#include "mdls/coding_models.hpp"
#include "mdls/dictionary.hpp"
#include "mdls/image.hpp"
#include "mdls/image_pipeline.hpp"
#include "mdls/learning.hpp"
#include "mdls/lowrank.hpp"
#include "mdls/parallel.hpp"
#include "mdls/report.hpp"
#include "mdls/sparse_coding.hpp"
