#pragma once

#include "overlap/error.hpp"
#include "overlap/gp.hpp"
#include "overlap/mercer_io.hpp"
#include "overlap/divergence.hpp"
#include "overlap/spectral.hpp"
#include "overlap/dataset.hpp"
#include "overlap/propensity.hpp"
#include "overlap/svm.hpp"
#include "overlap/estimators.hpp"
#include "overlap/tree.hpp"
#include "overlap/config.hpp"
#include "overlap/csv.hpp"
#include "overlap/report.hpp"
#include "overlap/study.hpp"
