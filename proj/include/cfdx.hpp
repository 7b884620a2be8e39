#pragma once

#include "cfdx/analysis.hpp"
#include "cfdx/augmentation.hpp"
#include "cfdx/cf_classifier.hpp"
#include "cfdx/cf_engine.hpp"
#include "cfdx/dataset.hpp"
#include "cfdx/error.hpp"
#include "cfdx/export.hpp"
#include "cfdx/kde.hpp"
#include "cfdx/model.hpp"
#include "cfdx/scaler.hpp"
#include "cfdx/schema.hpp"
#include "cfdx/split.hpp"
#include "cfdx/stats.hpp"
#include "cfdx/synthetic.hpp"
