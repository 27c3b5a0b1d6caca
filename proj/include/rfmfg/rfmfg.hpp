#pragma once

#include "rfmfg/cost_report.hpp"
#include "rfmfg/kernels.hpp"
#include "rfmfg/problem.hpp"
#include "rfmfg/reporting.hpp"
#include "rfmfg/solver.hpp"
#include "rfmfg/transcription.hpp"
