#pragma once

#include "risksharing/agents.hpp"
#include "risksharing/arrow_debreu.hpp"
#include "risksharing/best_response.hpp"
#include "risksharing/bundle.hpp"
#include "risksharing/diagnostics.hpp"
#include "risksharing/error.hpp"
#include "risksharing/expression.hpp"
#include "risksharing/limits.hpp"
#include "risksharing/measures.hpp"
#include "risksharing/nash.hpp"
#include "risksharing/quadrature.hpp"
#include "risksharing/roots.hpp"
#include "risksharing/scenario.hpp"
