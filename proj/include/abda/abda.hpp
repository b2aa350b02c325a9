#pragma once

#include "abda/dataset.hpp"
#include "abda/error.hpp"
#include "abda/evaluate.hpp"
#include "abda/gibbs.hpp"
#include "abda/harness.hpp"
#include "abda/inference.hpp"
#include "abda/likelihoods.hpp"
#include "abda/math.hpp"
#include "abda/model_io.hpp"
#include "abda/patterns.hpp"
#include "abda/report.hpp"
#include "abda/spn.hpp"
#include "abda/structure.hpp"
#include "abda/synthetic.hpp"
